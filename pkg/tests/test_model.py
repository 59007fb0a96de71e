"""Tests for the protocol data types and global allocators."""

import pytest

from tap_doublespend.exceptions import BoundExhaustedError, InvalidStatusTransitionError
from tap_doublespend.model import (
    ENDOWMENT_INPUT,
    ENDOWMENT_VALUE,
    GENESIS_ENTRY,
    Block,
    ChainEntry,
    Counters,
    TxPool,
    TxStatus,
    endowment,
    filler,
    payment,
)


class TestTransactions:
    """Test transaction builders."""

    def test_endowment(self) -> None:
        """Test peer i owns transaction i with the full endowment."""
        tx = endowment(2)
        assert tx.id == 2  # noqa: PLR2004
        assert tx.input.id == ENDOWMENT_INPUT
        assert not tx.input.is_filler
        assert tx.payment.address == 2  # noqa: PLR2004
        assert tx.total_value == ENDOWMENT_VALUE

    def test_payment_keeps_value(self) -> None:
        """Test a payment sends one coin and returns the rest as change."""
        tx = payment(tx_id=5, source_tx=1, sender=1, recipient=3, value=10)
        assert tx.payment.address == 3  # noqa: PLR2004
        assert tx.payment.value == 1
        assert tx.change.value == 9  # noqa: PLR2004
        assert tx.spender == 1
        assert tx.total_value == 10  # noqa: PLR2004
        assert tx.status is TxStatus.UNCONFIRMED

    def test_spent_output_names_the_owner(self) -> None:
        """Test the two outputs of one payment are distinct spendable outputs."""
        source = payment(tx_id=4, source_tx=1, sender=1, recipient=3, value=10)
        by_recipient = payment(tx_id=10, source_tx=source.id, sender=3, recipient=0, value=1)
        by_sender = payment(tx_id=11, source_tx=source.id, sender=1, recipient=2, value=9)
        assert by_recipient.spent_output == (4, 3)
        assert by_sender.spent_output == (4, 1)
        assert by_recipient.spent_output != by_sender.spent_output

    def test_filler_is_worthless(self) -> None:
        """Test filler transactions carry no value."""
        tx = filler(7, owner=3)
        assert tx.input.is_filler
        assert tx.total_value == 0

    def test_block_cannot_point_at_itself(self) -> None:
        """Test a block's predecessor differs from its number."""
        with pytest.raises(ValueError, match="own predecessor"):
            Block(num=2, prev=2, tx=filler(4, 0), creator=1)

    def test_chain_entry_str(self) -> None:
        """Test the bracket rendering of a chain entry."""
        assert str(GENESIS_ENTRY) == "[1,0,1]"
        assert str(ChainEntry(7, 2, 3, creator=2)) == "[7,2,3]"


class TestCounters:
    """Test the global number allocators."""

    def test_numbers_start_after_endowments(self) -> None:
        """Test transaction numbers start at the peer count and blocks at 2."""
        counters = Counters(peers=4)
        assert counters.next_tx_number() == 4  # noqa: PLR2004
        assert counters.next_tx_number() == 5  # noqa: PLR2004
        assert counters.next_block_number() == 2  # noqa: PLR2004

    def test_transaction_bound(self) -> None:
        """Test exhausting the transaction counter."""
        counters = Counters(peers=2, max_transactions=3)
        assert counters.next_tx_number() == 2  # noqa: PLR2004
        assert not counters.tx_available
        with pytest.raises(BoundExhaustedError) as info:
            counters.next_tx_number()
        assert info.value.bound == "max_transactions"

    def test_block_bound(self) -> None:
        """Test exhausting the block counter."""
        counters = Counters(peers=2, max_blocks=3)
        counters.next_block_number()
        with pytest.raises(BoundExhaustedError) as info:
            counters.next_block_number()
        assert info.value.bound == "max_blocks"
        assert info.value.limit == 3  # noqa: PLR2004


class TestTxPool:
    """Test the global transaction pool."""

    def test_first_unconfirmed_in_submission_order(self) -> None:
        """Test the oldest unconfirmed transaction is served first."""
        txpool = TxPool()
        first = payment(4, 0, 0, 1, 10)
        second = payment(5, 1, 1, 0, 10)
        txpool.add(first)
        txpool.add(second)
        assert txpool.first_unconfirmed() == first
        txpool.set_status(first.id, TxStatus.CONFIRMED)
        assert txpool.first_unconfirmed() == second
        assert len(txpool) == 2  # noqa: PLR2004
        assert 4 in txpool

    def test_status_transitions(self) -> None:
        """Test the allowed and forbidden status moves."""
        txpool = TxPool()
        txpool.add(payment(4, 0, 0, 1, 10))
        txpool.set_status(4, TxStatus.CONFIRMED)
        txpool.set_status(4, TxStatus.UNCONFIRMED)
        txpool.set_status(4, TxStatus.INVALID)
        with pytest.raises(InvalidStatusTransitionError):
            txpool.set_status(4, TxStatus.UNCONFIRMED)

    def test_add_rejects_duplicates_and_overflow(self) -> None:
        """Test resubmission and capacity errors."""
        txpool = TxPool(capacity=1)
        txpool.add(payment(4, 0, 0, 1, 10))
        with pytest.raises(BoundExhaustedError):
            txpool.add(payment(5, 1, 1, 0, 10))
        other = TxPool()
        other.add(payment(4, 0, 0, 1, 10))
        with pytest.raises(ValueError, match="already submitted"):
            other.add(payment(4, 0, 0, 1, 10))
