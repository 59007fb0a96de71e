"""Protocol data types shared by every part of the simulator.

Hashes and signatures are abstracted to integer identifiers: a transaction is
named by a global transaction number, a block by a global block number.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from tap_doublespend.exceptions import BoundExhaustedError, InvalidStatusTransitionError

if TYPE_CHECKING:
    from collections.abc import Iterator

ENDOWMENT_VALUE = 10
PAYMENT_AMOUNT = 1

# Input markers outside the transaction-number space.
ENDOWMENT_INPUT = -1
FILLER_INPUT = -2

GENESIS_NUM = 1
GENESIS_PREV = 0
GENESIS_CREATOR = 0
FIRST_BLOCK_NUM = 2

DEFAULT_MAX_TRANSACTIONS = 200
DEFAULT_MAX_BLOCKS = 200


class TxStatus(enum.Enum):
    """Status of a transaction in the global transaction pool."""

    UNCONFIRMED = "unconfirmed"
    CONFIRMED = "confirmed"
    INVALID = "invalid"


_ALLOWED_TRANSITIONS: dict[TxStatus, frozenset[TxStatus]] = {
    TxStatus.UNCONFIRMED: frozenset({TxStatus.CONFIRMED, TxStatus.INVALID}),
    # CONFIRMED -> INVALID happens when a pool takes a transaction and rejects it.
    TxStatus.CONFIRMED: frozenset({TxStatus.UNCONFIRMED, TxStatus.INVALID}),
    TxStatus.INVALID: frozenset(),
}


@dataclass(frozen=True, slots=True)
class TxOut:
    """Output slot: the receiving peer and the amount in whole BTC."""

    address: int
    value: int


@dataclass(frozen=True, slots=True)
class TxIn:
    """Input reference: the transaction number being spent."""

    id: int

    @property
    def is_filler(self) -> bool:
        """Whether this input marks a zero-value filler rather than a real source."""
        return self.id == FILLER_INPUT


@dataclass(frozen=True, slots=True)
class Transaction:
    """A value transfer with a payment slot and a change slot.

    An unused change slot carries value 0.
    """

    id: int
    input: TxIn
    outputs: tuple[TxOut, TxOut]
    status: TxStatus = TxStatus.UNCONFIRMED

    @property
    def payment(self) -> TxOut:
        """The one-coin slot paid to the recipient."""
        return self.outputs[0]

    @property
    def change(self) -> TxOut:
        """What goes back to the spender."""
        return self.outputs[1]

    @property
    def spender(self) -> int:
        """The peer that created the transaction (change always goes back to it)."""
        return self.change.address

    @property
    def total_value(self) -> int:
        """Sum of both output slots."""
        return sum(out.value for out in self.outputs)

    @property
    def spent_output(self) -> tuple[int, int]:
        """The output consumed, keyed by source transaction and owner."""
        return (self.input.id, self.spender)

    def with_status(self, status: TxStatus) -> Transaction:
        """Copy of this transaction carrying ``status``."""
        return dataclasses.replace(self, status=status)


def endowment(peer_id: int) -> Transaction:
    """Return the initial transaction giving a peer its starting coins.

    Peer ``i`` owns transaction number ``i``.
    """
    return Transaction(
        id=peer_id,
        input=TxIn(ENDOWMENT_INPUT),
        outputs=(TxOut(peer_id, ENDOWMENT_VALUE), TxOut(peer_id, 0)),
        status=TxStatus.CONFIRMED,
    )


def payment(tx_id: int, source_tx: int, sender: int, recipient: int, value: int) -> Transaction:
    """Build a one-coin payment spending ``value`` with the rest as change to ``sender``."""
    return Transaction(
        id=tx_id,
        input=TxIn(source_tx),
        outputs=(TxOut(recipient, PAYMENT_AMOUNT), TxOut(sender, value - PAYMENT_AMOUNT)),
    )


def filler(tx_id: int, owner: int) -> Transaction:
    """Build a zero-value self-paying transaction used to keep a racing pool mining."""
    return Transaction(
        id=tx_id,
        input=TxIn(FILLER_INPUT),
        outputs=(TxOut(owner, 0), TxOut(owner, 0)),
    )


@dataclass(frozen=True, slots=True)
class Block:
    """A mined block carrying exactly one transaction."""

    num: int
    prev: int
    tx: Transaction
    creator: int

    def __post_init__(self) -> None:
        if self.num == self.prev:
            msg = f"Block {self.num} cannot be its own predecessor"
            raise ValueError(msg)


@dataclass(frozen=True, slots=True)
class ChainEntry:
    """One row of the block-chain triple list, plus the creating pool."""

    num: int
    prev: int
    length: int
    creator: int = GENESIS_CREATOR

    def __str__(self) -> str:
        return f"[{self.num},{self.prev},{self.length}]"


GENESIS_ENTRY = ChainEntry(GENESIS_NUM, GENESIS_PREV, 1, GENESIS_CREATOR)


@dataclass(slots=True)
class WalletEntry:
    """An unspent output owned by a peer; value 0 marks it spent."""

    tx_id: int
    value: int


@dataclass(slots=True)
class Counters:
    """Global transaction and block number allocators."""

    peers: int
    max_transactions: int = DEFAULT_MAX_TRANSACTIONS
    max_blocks: int = DEFAULT_MAX_BLOCKS
    tx_num: int = field(init=False)
    block_num: int = field(init=False, default=FIRST_BLOCK_NUM)

    def __post_init__(self) -> None:
        # Numbers below PEERS belong to the initial endowments.
        self.tx_num = self.peers

    @property
    def tx_available(self) -> bool:
        """Whether another transaction number can be allocated."""
        return self.tx_num < self.max_transactions

    @property
    def block_available(self) -> bool:
        """Whether another block number can be allocated."""
        return self.block_num < self.max_blocks

    def next_tx_number(self) -> int:
        """Allocate the next transaction number.

        Raises:
            BoundExhaustedError: The counter reached ``max_transactions``.
        """
        if not self.tx_available:
            raise BoundExhaustedError("max_transactions", self.max_transactions)
        num = self.tx_num
        self.tx_num += 1
        return num

    def next_block_number(self) -> int:
        """Allocate the next block number; number 1 stays reserved for genesis.

        Raises:
            BoundExhaustedError: The counter reached ``max_blocks``.
        """
        if not self.block_available:
            raise BoundExhaustedError("max_blocks", self.max_blocks)
        num = self.block_num
        self.block_num += 1
        return num


class TxPool:
    """The global pool of submitted transactions, kept in submission order."""

    def __init__(self, capacity: int = DEFAULT_MAX_TRANSACTIONS) -> None:
        self.capacity = capacity
        self._txs: dict[int, Transaction] = {}

    def __len__(self) -> int:
        return len(self._txs)

    def __iter__(self) -> Iterator[Transaction]:
        return iter(self._txs.values())

    def __contains__(self, tx_id: object) -> bool:
        return tx_id in self._txs

    def get(self, tx_id: int) -> Transaction:
        """Return the pooled transaction numbered ``tx_id``."""
        return self._txs[tx_id]

    def add(self, tx: Transaction) -> None:
        """Submit a transaction as UNCONFIRMED.

        Raises:
            BoundExhaustedError: The pool already holds ``capacity`` transactions.
            ValueError: A transaction with the same number was already submitted.
        """
        if len(self._txs) >= self.capacity:
            raise BoundExhaustedError("max_transactions", self.capacity)
        if tx.id in self._txs:
            msg = f"Transaction {tx.id} already submitted"
            raise ValueError(msg)
        self._txs[tx.id] = tx.with_status(TxStatus.UNCONFIRMED)

    def first_unconfirmed(self) -> Transaction | None:
        """Oldest submitted transaction still UNCONFIRMED."""
        return next((tx for tx in self._txs.values() if tx.status is TxStatus.UNCONFIRMED), None)

    def has_unconfirmed(self) -> bool:
        """Whether any pool could take a transaction now."""
        return self.first_unconfirmed() is not None

    def set_status(self, tx_id: int, status: TxStatus) -> Transaction:
        """Move a pooled transaction to ``status``.

        Raises:
            InvalidStatusTransitionError: The move is not a protocol transition.
        """
        tx = self._txs[tx_id]
        if status not in _ALLOWED_TRANSITIONS[tx.status]:
            msg = f"Transaction {tx_id}: {tx.status.name} -> {status.name} is not allowed"
            raise InvalidStatusTransitionError(msg)
        updated = tx.with_status(status)
        self._txs[tx_id] = updated
        return updated
