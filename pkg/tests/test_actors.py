"""Tests for the pool and peer state machines."""

import numpy as np
import pytest

from tap_doublespend.actors import (
    EventTrace,
    Location,
    MaliciousPeer,
    MaliciousPool,
    Peer,
    Pool,
    SharedState,
)
from tap_doublespend.model import Block, Counters, TxPool, TxStatus, filler, payment

PEERS = 3
CAPACITY = 200


@pytest.fixture
def shared() -> SharedState:
    return SharedState(
        txpool=TxPool(),
        counters=Counters(peers=PEERS),
        rng=np.random.default_rng(0),
        peers=PEERS,
        trace=EventTrace(enabled=True),
    )


@pytest.fixture
def pool() -> Pool:
    node = Pool(1, 0.5, PEERS, CAPACITY)
    node.initialize()
    return node


@pytest.fixture
def peer() -> Peer:
    node = Peer(0, PEERS, CAPACITY)
    node.initialize()
    return node


class TestHonestActors:
    """Test the honest pool and peer cycles."""

    def test_payment_cycle(self, shared: SharedState, pool: Pool, peer: Peer) -> None:
        """Test a payment goes from creation through mining into the wallet."""
        assert peer.step(shared)
        tx = shared.txpool.get(PEERS)
        assert tx.input.id == peer.id
        assert peer.balance == 0
        assert not peer.step(shared)

        assert pool.step(shared)
        assert pool.location is Location.VERIFY
        assert shared.txpool.get(tx.id).status is TxStatus.CONFIRMED
        assert pool.step(shared)
        assert pool.location is Location.MINE
        assert pool.attempts == 1

        block = pool.complete_block(shared)
        assert (block.num, block.prev, block.creator) == (2, 1, pool.id)
        assert pool.location is Location.WAIT
        assert pool.view.longest_chain_tip() == block.num

        peer.receive_block(block, shared)
        assert peer.can_update_wallet()
        peer.update_wallet()
        expected = 10 if tx.payment.address == peer.id else 9
        assert peer.balance == expected
        assert not peer.can_update_wallet()
        assert [event.transition for event in shared.trace.events][:2] == [
            "create_transaction",
            "get_transaction",
        ]

    def test_validity_checks(self, shared: SharedState, pool: Pool) -> None:
        """Test spent inputs, foreign endowments and value mismatches are rejected."""
        assert pool.is_valid(payment(10, 1, 1, 0, 10))
        assert not pool.is_valid(payment(10, 1, 0, 2, 10))
        assert not pool.is_valid(payment(10, 1, 1, 0, 9))
        assert not pool.is_valid(payment(10, 1, 1, 0, 0))

        spent = payment(shared.counters.next_tx_number(), 1, 1, 0, 10)
        pool.receive_block(Block(shared.counters.next_block_number(), 1, spent, 2), shared)
        assert not pool.is_valid(payment(10, 1, 1, 2, 10))
        # Change from a main-chain transaction is spendable by its owner.
        assert pool.is_valid(payment(10, spent.id, 1, 2, 9))
        assert pool.is_valid(payment(11, spent.id, 0, 2, 1))

    def test_payment_and_change_are_spent_independently(
        self, shared: SharedState, pool: Pool
    ) -> None:
        """Test the recipient and the sender of one payment can each spend their output."""
        source = payment(shared.counters.next_tx_number(), 1, 1, 0, 10)
        pool.receive_block(Block(shared.counters.next_block_number(), 1, source, 2), shared)
        by_sender = payment(shared.counters.next_tx_number(), source.id, 1, 2, 9)
        by_recipient = payment(shared.counters.next_tx_number(), source.id, 0, 2, 1)
        for tx in (by_sender, by_recipient):
            shared.txpool.add(tx)
            assert pool.step(shared)
            assert pool.step(shared)
            assert pool.mining
            pool.complete_block(shared)
        mined = [tx.id for tx in pool.view.main_chain_transactions()]
        assert mined == [by_recipient.id, by_sender.id, source.id]
        assert shared.txpool.get(by_recipient.id).status is TxStatus.CONFIRMED
        assert not pool.is_valid(payment(99, source.id, 0, 1, 1))

    def test_rejection_marks_invalid(self, shared: SharedState, pool: Pool) -> None:
        """Test a rejected transaction becomes INVALID and the pool waits again."""
        bad = payment(shared.counters.next_tx_number(), 1, 0, 2, 10)
        shared.txpool.add(bad)
        assert pool.step(shared)
        assert pool.step(shared)
        assert pool.location is Location.WAIT
        assert shared.txpool.get(bad.id).status is TxStatus.INVALID
        assert not pool.step(shared)

    def test_received_block_abandons_mining(self, shared: SharedState, pool: Pool) -> None:
        """Test a pool drops its attempt and returns the transaction on a new block."""
        tx = payment(shared.counters.next_tx_number(), 0, 0, 1, 10)
        shared.txpool.add(tx)
        pool.step(shared)
        pool.step(shared)
        assert pool.mining
        other = Block(shared.counters.next_block_number(), 1, filler(50, 2), creator=2)
        pool.receive_block(other, shared)
        assert pool.location is Location.WAIT
        assert shared.txpool.get(tx.id).status is TxStatus.UNCONFIRMED
        pool.step(shared)
        pool.step(shared)
        assert pool.attempts == 2  # noqa: PLR2004


class TestMaliciousActors:
    """Test the double-spend collusion between the malicious peer and pool."""

    @pytest.fixture
    def mpool(self) -> MaliciousPool:
        node = MaliciousPool(4, 0.5, PEERS, CAPACITY, confirmation_depth=1)
        node.initialize()
        return node

    @pytest.fixture
    def mpeer(self, mpool: MaliciousPool) -> MaliciousPeer:
        node = MaliciousPeer(2, PEERS, CAPACITY, victim=0)
        node.initialize()
        node.accomplice = mpool
        return node

    def test_duplicates(
        self,
        shared: SharedState,
        mpeer: MaliciousPeer,
        mpool: MaliciousPool,
    ) -> None:
        """Test the peer pays the victim publicly and itself privately with one input."""
        assert not mpeer.can_create_transaction(shared.counters)
        assert mpeer.step(shared)
        assert not mpeer.step(shared)
        assert mpool.honest_tx is not None
        assert mpool.malicious_tx_slot is not None
        honest, duplicate = mpool.honest_tx, mpool.malicious_tx_slot
        assert honest.input == duplicate.input
        assert honest.payment.address == 0
        assert duplicate.payment.address == mpeer.id
        assert honest.id in shared.txpool
        assert duplicate.id not in shared.txpool
        assert mpeer.balance == 0

    def test_fork_and_race(
        self,
        shared: SharedState,
        mpeer: MaliciousPeer,
        mpool: MaliciousPool,
    ) -> None:
        """Test the fork starts below the victim's block and the race overtakes it."""
        mpeer.step(shared)
        assert mpool.honest_tx is not None
        assert not mpool.trigger_fork()

        honest_tx = shared.txpool.set_status(mpool.honest_tx.id, TxStatus.CONFIRMED)
        honest_block = Block(shared.counters.next_block_number(), 1, honest_tx, creator=1)
        mpool.receive_block(honest_block, shared)
        assert mpool.honest_tx_depth() == 1

        assert mpool.step(shared)
        assert mpool.fork_base == 1
        assert mpool.mining_parent() == 1
        mblock = mpool.complete_block(shared)
        assert mpool.mblock == mblock.num
        assert mblock.prev == 1
        assert mpool.racing
        # Equal length: the first-seen branch stays main.
        assert mpool.view.longest_chain_tip() == honest_block.num

        assert mpool.step(shared)
        racing_filler = mpool.local_tx
        assert racing_filler is not None
        assert racing_filler.input.is_filler
        assert mpool.mining_parent() == mblock.num
        rival = Block(shared.counters.next_block_number(), honest_block.num, filler(60, 0), 1)
        attempts = mpool.attempts
        mpool.receive_block(rival, shared)
        # The side-chain attempt restarts with the same filler on a fresh timer.
        assert mpool.location is Location.WAIT
        assert mpool.held_filler == racing_filler
        tx_num = shared.counters.tx_num
        assert mpool.step(shared)
        assert mpool.local_tx == racing_filler
        assert mpool.attempts == attempts + 1
        assert shared.counters.tx_num == tx_num
        assert mpool.mining_parent() == mblock.num

        mpool.complete_block(shared)
        assert mpool.view.length_longest == 3  # noqa: PLR2004
        assert mpool.view.longest_chain_tip() == rival.num
        mpool.step(shared)
        mpool.complete_block(shared)
        assert mpool.view.check_block_in_chain(mblock.num)

    def test_duplicate_block_is_not_interrupted(
        self,
        shared: SharedState,
        mpeer: MaliciousPeer,
        mpool: MaliciousPool,
    ) -> None:
        """Test blocks arriving while the duplicate is mined leave the attempt running."""
        mpeer.step(shared)
        assert mpool.honest_tx is not None
        honest_block = Block(shared.counters.next_block_number(), 1, mpool.honest_tx, 1)
        mpool.receive_block(honest_block, shared)
        assert mpool.trigger_fork()
        duplicate = mpool.local_tx
        attempts = mpool.attempts
        next_block = Block(shared.counters.next_block_number(), honest_block.num, filler(80, 0), 1)
        mpool.receive_block(next_block, shared)
        assert mpool.mining
        assert mpool.race_flag
        assert mpool.local_tx == duplicate
        assert mpool.attempts == attempts
        assert mpool.view.longest_chain_tip() == next_block.num

    def test_deeper_confirmation_waits(self, shared: SharedState, mpeer: MaliciousPeer) -> None:
        """Test a depth-2 attacker waits for a second confirmation."""
        mpool = MaliciousPool(4, 0.5, PEERS, CAPACITY, confirmation_depth=2)
        mpool.initialize()
        mpeer.accomplice = mpool
        mpeer.step(shared)
        assert mpool.honest_tx is not None
        honest_block = Block(shared.counters.next_block_number(), 1, mpool.honest_tx, 1)
        mpool.receive_block(honest_block, shared)
        assert not mpool.trigger_fork()
        mpool.receive_block(Block(shared.counters.next_block_number(), 2, filler(70, 0), 1), shared)
        assert mpool.trigger_fork()
        assert mpool.fork_base == 1
