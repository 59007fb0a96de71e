"""State machines for honest and malicious pools and peers.

Every actor owns a `BlockChainView`. Timed behaviour (finding a block) is
driven by the engine; everything else is an instantaneous transition fired by
`step` when its guard holds.
"""

from __future__ import annotations

import enum
import logging
import sys
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, ClassVar

from tap_doublespend.chain import AddResult, BlockChainView
from tap_doublespend.model import (
    Block,
    Transaction,
    TxStatus,
    WalletEntry,
    endowment,
    filler,
    payment,
)

if sys.version_info >= (3, 12):
    from typing import override
else:
    from typing_extensions import override

if TYPE_CHECKING:
    import numpy as np

    from tap_doublespend.model import Counters, TxPool

logger = logging.getLogger(__name__)


class Location(enum.Enum):
    """Control location of an actor state machine."""

    INITIAL = "initial"
    WAIT = "wait"
    VERIFY = "verify"
    MINE = "mine"


@dataclass(frozen=True, slots=True)
class TraceEvent:
    """One actor transition."""

    time: float
    actor: str
    transition: str
    block: int | None = None
    tx: int | None = None

    def __str__(self) -> str:
        block = "-" if self.block is None else self.block
        tx = "-" if self.tx is None else self.tx
        minutes = self.time / 60
        return f"{minutes:10.2f} min  {self.actor:<8} {self.transition:<18} block={block} tx={tx}"


@dataclass
class EventTrace:
    """Collects transitions when enabled; always mirrors them to the debug log."""

    enabled: bool = False
    now: float = 0.0
    events: list[TraceEvent] = field(default_factory=list)

    def record(
        self,
        actor: str,
        transition: str,
        *,
        block: int | None = None,
        tx: int | None = None,
    ) -> None:
        """Note a transition at the current simulated time."""
        if self.enabled:
            self.events.append(TraceEvent(self.now, actor, transition, block, tx))
        logger.debug("t=%.1f %s %s block=%s tx=%s", self.now, actor, transition, block, tx)

    def lines(self) -> list[str]:
        """Rendered trace, one transition per line."""
        return [str(event) for event in self.events]


@dataclass
class SharedState:
    """Globals every actor in one run can touch."""

    txpool: TxPool
    counters: Counters
    rng: np.random.Generator
    peers: int
    trace: EventTrace = field(default_factory=EventTrace)


class Node:
    """Common part of pools and peers: identity, location and chain view."""

    kind: ClassVar[str] = "node"

    def __init__(self, node_id: int, peers: int, capacity: int) -> None:
        self.id = node_id
        self.peers = peers
        self.view = BlockChainView(capacity)
        self._location = Location.INITIAL
        self.attempts = 0

    @property
    def location(self) -> Location:
        """Current control location."""
        return self._location

    @location.setter
    def location(self, value: Location) -> None:
        # Every entry into Mine is a fresh mining attempt with its own timer.
        if value is Location.MINE and self._location is not Location.MINE:
            self.attempts += 1
        self._location = value

    @property
    def name(self) -> str:
        """Actor label used in traces, e.g. ``pool2``."""
        return f"{self.kind}{self.id}"

    def initialize(self) -> None:
        """Reset the view to genesis and enter Wait."""
        self.view.init_chain()
        self.location = Location.WAIT

    def receive_block(self, block: Block, shared: SharedState) -> AddResult:
        """Offer a broadcast block to this node's view."""
        result = self.view.add_block(block)
        shared.trace.record(self.name, f"receive:{result.value}", block=block.num, tx=block.tx.id)
        return result

    def step(self, shared: SharedState) -> bool:
        """Fire one enabled instantaneous transition; return whether one fired."""
        raise NotImplementedError


class Pool(Node):
    """An honest mining pool: Wait -> Verify -> Mine -> Wait."""

    kind = "pool"

    def __init__(self, pool_id: int, share: float, peers: int, capacity: int) -> None:
        super().__init__(pool_id, peers, capacity)
        self.share = share
        self.local_tx: Transaction | None = None

    @property
    def mining(self) -> bool:
        """Whether a mining attempt is in progress."""
        return self.location is Location.MINE

    def can_get_transaction(self, txpool: TxPool) -> bool:
        """Guard of get_transaction: waiting with work available."""
        return self.location is Location.WAIT and txpool.has_unconfirmed()

    def get_transaction(self, txpool: TxPool) -> Transaction:
        """Take the oldest unconfirmed transaction from the pool for verification."""
        tx = txpool.first_unconfirmed()
        if tx is None:
            msg = f"{self.name}: no unconfirmed transaction to take"
            raise RuntimeError(msg)
        self.local_tx = txpool.set_status(tx.id, TxStatus.CONFIRMED)
        self.location = Location.VERIFY
        return self.local_tx

    def source_transaction(
        self, tx: Transaction, main_txs: list[Transaction]
    ) -> Transaction | None:
        """The transaction whose output ``tx`` spends: an endowment or a main-chain entry."""
        if 0 <= tx.input.id < self.peers:
            return endowment(tx.input.id)
        return next((other for other in main_txs if other.id == tx.input.id), None)

    def is_valid(self, tx: Transaction) -> bool:
        """Check output values, the spent output and value conservation against the main chain."""
        if tx.payment.value < 1 or tx.change.value < 0:
            return False
        main_txs = self.view.main_chain_transactions()
        if any(other.spent_output == tx.spent_output for other in main_txs):
            return False
        source = self.source_transaction(tx, main_txs)
        if source is None:
            return False
        owned = sum(out.value for out in source.outputs if out.address == tx.spender)
        return owned == tx.total_value

    def verify_transaction(self, tx: Transaction, txpool: TxPool) -> bool:
        """Accept ``tx`` for mining or mark it INVALID and go back to waiting."""
        if self.is_valid(tx):
            self.location = Location.MINE
            return True
        txpool.set_status(tx.id, TxStatus.INVALID)
        logger.debug("%s rejected transaction %d", self.name, tx.id)
        self.local_tx = None
        self.location = Location.WAIT
        return False

    def mining_parent(self) -> int:
        """Block the next mined block will extend."""
        return self.view.longest_chain_tip()

    def complete_block(self, shared: SharedState) -> Block:
        """Seal the block being mined on top of the mining parent and return it for broadcast.

        Raises:
            BoundExhaustedError: No block numbers are left.
        """
        if self.local_tx is None or not self.mining:
            msg = f"{self.name} is not mining"
            raise RuntimeError(msg)
        block = Block(
            num=shared.counters.next_block_number(),
            prev=self.mining_parent(),
            tx=self.local_tx.with_status(TxStatus.CONFIRMED),
            creator=self.id,
        )
        self.view.add_block(block)
        self.local_tx = None
        self.location = Location.WAIT
        shared.trace.record(self.name, "mined", block=block.num, tx=block.tx.id)
        return block

    def abandon_mining(self, shared: SharedState) -> None:
        """Drop the current attempt and hand its transaction back to the pool."""
        if self.local_tx is not None:
            shared.txpool.set_status(self.local_tx.id, TxStatus.UNCONFIRMED)
            shared.trace.record(self.name, "abandon", tx=self.local_tx.id)
        self.local_tx = None
        self.location = Location.WAIT

    @override
    def receive_block(self, block: Block, shared: SharedState) -> AddResult:
        result = super().receive_block(block, shared)
        if self.mining:
            self.abandon_mining(shared)
        return result

    @override
    def step(self, shared: SharedState) -> bool:
        if self.location is Location.VERIFY and self.local_tx is not None:
            tx = self.local_tx
            accepted = self.verify_transaction(tx, shared.txpool)
            shared.trace.record(self.name, "verify" if accepted else "reject", tx=tx.id)
            return True
        if self.can_get_transaction(shared.txpool):
            tx = self.get_transaction(shared.txpool)
            shared.trace.record(self.name, "get_transaction", tx=tx.id)
            return True
        return False


class Peer(Node):
    """An honest peer paying one coin at a time to uniformly chosen peers."""

    kind = "peer"

    def __init__(self, peer_id: int, peers: int, capacity: int) -> None:
        super().__init__(peer_id, peers, capacity)
        self.wallet: list[WalletEntry] = []
        self._recorded: set[int] = set()
        self._scanned_tip: int | None = None

    @override
    def initialize(self) -> None:
        super().initialize()
        grant = endowment(self.id)
        self.wallet = [WalletEntry(grant.id, grant.total_value)]
        self._recorded = {grant.id}
        self._scanned_tip = None

    @property
    def balance(self) -> int:
        """Coins currently spendable from the wallet."""
        return sum(entry.value for entry in self.wallet)

    def funded_entry(self) -> WalletEntry | None:
        """First wallet entry that still holds coins."""
        return next((entry for entry in self.wallet if entry.value > 0), None)

    def can_create_transaction(self, counters: Counters) -> bool:
        """Guard of create_transaction: waiting, funded and numbers left."""
        return (
            self.location is Location.WAIT
            and counters.tx_available
            and self.funded_entry() is not None
        )

    def create_transaction(self, recipient: int, txpool: TxPool, counters: Counters) -> Transaction:
        """Spend the first funded wallet entry: one coin to ``recipient``, the rest as change."""
        entry = self.funded_entry()
        if entry is None:
            msg = f"{self.name} has nothing to spend"
            raise RuntimeError(msg)
        tx = payment(counters.next_tx_number(), entry.tx_id, self.id, recipient, entry.value)
        txpool.add(tx)
        entry.value = 0
        return tx

    def unrecorded_outputs(self) -> dict[int, int]:
        """Main-chain transactions paying this peer that the wallet has not seen.

        Outputs of one transaction are summed into a single entry.
        """
        tip = self.view.longest_chain_tip()
        if tip == self._scanned_tip:
            return {}
        found: dict[int, int] = {}
        for tx in self.view.main_chain_transactions():
            if tx.id in self._recorded:
                continue
            received = [out.value for out in tx.outputs if out.address == self.id]
            if received:
                found[tx.id] = sum(received)
        if not found:
            self._scanned_tip = tip
        return found

    def can_update_wallet(self) -> bool:
        """Guard of update_wallet."""
        return bool(self.unrecorded_outputs())

    def update_wallet(self) -> list[WalletEntry]:
        """Record every unseen main-chain output paying this peer, at most once each."""
        added: list[WalletEntry] = []
        for tx_id, value in sorted(self.unrecorded_outputs().items()):
            self._recorded.add(tx_id)
            if value > 0:
                entry = WalletEntry(tx_id, value)
                self.wallet.append(entry)
                added.append(entry)
        self._scanned_tip = self.view.longest_chain_tip()
        return added

    @override
    def step(self, shared: SharedState) -> bool:
        if self.can_update_wallet():
            for entry in self.update_wallet():
                shared.trace.record(self.name, "update_wallet", tx=entry.tx_id)
            return True
        if self.can_create_transaction(shared.counters):
            recipient = int(shared.rng.integers(shared.peers))
            tx = self.create_transaction(recipient, shared.txpool, shared.counters)
            shared.trace.record(self.name, "create_transaction", tx=tx.id)
            return True
        return False


class MaliciousPool(Pool):
    """A pool that races a fork carrying the duplicate once the victim's payment is deep enough."""

    kind = "mpool"

    def __init__(
        self,
        pool_id: int,
        share: float,
        peers: int,
        capacity: int,
        confirmation_depth: int,
    ) -> None:
        super().__init__(pool_id, share, peers, capacity)
        self.confirmation_depth = confirmation_depth
        self.malicious_tx_slot: Transaction | None = None
        self.honest_tx: Transaction | None = None
        self.owner: int | None = None
        self.race_flag = False
        self.racing = False
        self.fork_base: int | None = None
        self.race_tip: int | None = None
        self.held_filler: Transaction | None = None
        self.mblock: int | None = None

    def receive_duplicate(self, honest_tx: Transaction, duplicate: Transaction) -> None:
        """Accept the private duplicate of ``honest_tx`` from the colluding peer."""
        self.honest_tx = honest_tx
        self.malicious_tx_slot = duplicate
        self.owner = duplicate.spender

    def honest_tx_depth(self) -> int | None:
        """Confirmations of the victim's payment on this pool's main chain."""
        if self.honest_tx is None:
            return None
        num = self.view.main_chain_block_of(self.honest_tx.id)
        return None if num is None else self.view.depth_of(num)

    def trigger_fork(self) -> bool:
        """Start mining the duplicate below the honest payment's block once it is deep enough."""
        if self.location is not Location.WAIT or self.malicious_tx_slot is None:
            return False
        depth = self.honest_tx_depth()
        if depth is None or depth < self.confirmation_depth or self.honest_tx is None:
            return False
        honest_block = self.view.main_chain_block_of(self.honest_tx.id)
        if honest_block is None:
            return False
        self.fork_base = self.view.entry(honest_block).prev
        self.local_tx = self.malicious_tx_slot
        self.malicious_tx_slot = None
        self.race_flag = True
        self.location = Location.MINE
        logger.debug(
            "%s forks at block %d, payment %d has %d confirmations",
            self.name,
            self.fork_base,
            honest_block,
            depth,
        )
        return True

    @override
    def mining_parent(self) -> int:
        if self.race_flag and self.fork_base is not None:
            return self.fork_base
        if self.racing and self.race_tip is not None:
            return self.race_tip
        return super().mining_parent()

    @override
    def complete_block(self, shared: SharedState) -> Block:
        was_racing = self.race_flag or self.racing
        carries_duplicate = self.race_flag
        block = super().complete_block(shared)
        if carries_duplicate:
            self.race_flag = False
            self.racing = True
            self.mblock = block.num
            shared.trace.record(self.name, "mblock", block=block.num, tx=block.tx.id)
        if was_racing:
            self.race_tip = block.num
        return block

    def can_continue_race(self, counters: Counters) -> bool:
        """Guard of continue_race: waiting on the side chain with a filler to mine."""
        return (
            self.racing
            and self.location is Location.WAIT
            and (self.held_filler is not None or counters.tx_available)
        )

    def continue_race(self, counters: Counters) -> Transaction:
        """Start the next side-chain block with a self-paying filler transaction.

        A filler dropped by an abandoned attempt is mined again before a new one is drawn.
        """
        if self.held_filler is not None:
            self.local_tx, self.held_filler = self.held_filler, None
        else:
            owner = self.id if self.owner is None else self.owner
            self.local_tx = filler(counters.next_tx_number(), owner)
        self.location = Location.MINE
        return self.local_tx

    @override
    def abandon_mining(self, shared: SharedState) -> None:
        if self.local_tx is None or not self.local_tx.input.is_filler:
            super().abandon_mining(shared)
            return
        # Fillers never enter the transaction pool; keep it for the next attempt.
        self.held_filler = self.local_tx
        shared.trace.record(self.name, "abandon", tx=self.local_tx.id)
        self.local_tx = None
        self.location = Location.WAIT

    @override
    def receive_block(self, block: Block, shared: SharedState) -> AddResult:
        if self.mining and self.race_flag:
            # The duplicate's block is never interrupted; the view still tracks everyone's blocks.
            return Node.receive_block(self, block, shared)
        return super().receive_block(block, shared)

    @override
    def step(self, shared: SharedState) -> bool:
        if self.trigger_fork():
            tx_id = None if self.local_tx is None else self.local_tx.id
            shared.trace.record(self.name, "trigger_fork", block=self.fork_base, tx=tx_id)
            return True
        if self.can_continue_race(shared.counters):
            tx = self.continue_race(shared.counters)
            shared.trace.record(self.name, "race", block=self.race_tip, tx=tx.id)
            return True
        if self.racing:
            return False
        return super().step(shared)


class MaliciousPeer(Peer):
    """A peer that creates exactly two transactions spending the same input."""

    kind = "mpeer"

    def __init__(self, peer_id: int, peers: int, capacity: int, victim: int) -> None:
        super().__init__(peer_id, peers, capacity)
        self.victim = victim
        self.duplicates_created = 0
        self.accomplice: MaliciousPool | None = None

    @override
    def can_create_transaction(self, counters: Counters) -> bool:
        return False

    def can_create_duplicates(self, counters: Counters) -> bool:
        """Guard of create_duplicates: once, with funds and two free numbers."""
        return (
            self.duplicates_created == 0
            and self.location is Location.WAIT
            and self.funded_entry() is not None
            and counters.tx_num + 2 <= counters.max_transactions
        )

    def create_duplicates(
        self,
        txpool: TxPool,
        counters: Counters,
        accomplice: MaliciousPool,
    ) -> tuple[Transaction, Transaction]:
        """Pay the victim publicly and hand a self-payment of the same input to the accomplice."""
        entry = self.funded_entry()
        if entry is None or self.duplicates_created:
            msg = f"{self.name} cannot create duplicates"
            raise RuntimeError(msg)
        honest = payment(counters.next_tx_number(), entry.tx_id, self.id, self.victim, entry.value)
        duplicate = payment(counters.next_tx_number(), entry.tx_id, self.id, self.id, entry.value)
        txpool.add(honest)
        accomplice.receive_duplicate(honest, duplicate)
        entry.value = 0
        self.duplicates_created = 2
        return honest, duplicate

    @override
    def step(self, shared: SharedState) -> bool:
        if self.can_update_wallet():
            self.update_wallet()
            return True
        if self.accomplice is not None and self.can_create_duplicates(shared.counters):
            honest, duplicate = self.create_duplicates(
                shared.txpool, shared.counters, self.accomplice
            )
            shared.trace.record(self.name, "create_duplicates", tx=honest.id)
            shared.trace.record(self.name, "hand_duplicate", tx=duplicate.id)
            return True
        return False
