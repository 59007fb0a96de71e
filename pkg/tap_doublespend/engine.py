"""Continuous-time discrete-event kernel.

Each mining pool holds an exponentially distributed timer while it is in its
Mine location. The earliest timer fires, the block is broadcast to every node
at once, and then all enabled instantaneous transitions run to quiescence in a
fixed actor order: honest peers, honest pools, the malicious peer, the
malicious pool.
"""

from __future__ import annotations

import enum
import heapq
import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from tap_doublespend.actors import (
    EventTrace,
    Location,
    MaliciousPeer,
    MaliciousPool,
    Node,
    Peer,
    Pool,
    SharedState,
    TraceEvent,
)
from tap_doublespend.chain import BlockChainView
from tap_doublespend.config import HASHES_PER_DIFFICULTY, RateModel
from tap_doublespend.exceptions import (
    BoundExhaustedError,
    ChainInvariantError,
    InvariantViolationError,
)
from tap_doublespend.model import (
    Block,
    Counters,
    TxPool,
    TxStatus,
    endowment,
    filler,
)

if TYPE_CHECKING:
    from tap_doublespend.config import ScenarioConfig

logger = logging.getLogger(__name__)

_ORACLE_HONEST = 1
_ORACLE_ATTACKER = 2


def sample_mining_time(rate_model: RateModel, share: float, rng: np.random.Generator) -> float:
    """Draw the seconds a pool with ``share`` of the hash-rate needs to find a block.

    Raises:
        ValueError: The share is not positive, so the pool would never find a block.
    """
    if share <= 0:
        msg = f"A pool with share {share} never finds a block"
        raise ValueError(msg)
    return float(rng.exponential(rate_model.mean_time(share)))


class EventQueue:
    """Pending mining timers ordered by firing time, then pool id.

    A pool has at most one live timer; rescheduling or cancelling makes the
    older entry stale and it is skipped on pop.
    """

    def __init__(self) -> None:
        self.now = 0.0
        self._heap: list[tuple[float, int, int]] = []
        self._live: dict[int, int] = {}

    def __len__(self) -> int:
        return len(self._live)

    def schedule(self, pool_id: int, delay: float, token: int) -> float:
        """Arm the timer of ``pool_id`` ``delay`` seconds from now; return the firing time."""
        when = self.now + delay
        heapq.heappush(self._heap, (when, pool_id, token))
        self._live[pool_id] = token
        return when

    def cancel(self, pool_id: int) -> None:
        """Disarm the live timer of ``pool_id``, if any."""
        self._live.pop(pool_id, None)

    def is_scheduled(self, pool_id: int, token: int) -> bool:
        """Whether the live timer of ``pool_id`` belongs to attempt ``token``."""
        return self._live.get(pool_id) == token

    def pop(self) -> tuple[float, int] | None:
        """Remove the earliest live timer and advance the clock to it."""
        while self._heap:
            when, pool_id, token = heapq.heappop(self._heap)
            if self._live.get(pool_id) != token:
                continue
            del self._live[pool_id]
            self.now = when
            return when, pool_id
        return None


class Termination(enum.Enum):
    """Why a run stopped."""

    SUCCESS = "success"
    MAX_EVENTS = "max_events"
    MAX_BLOCKS = "max_blocks"
    MAX_TRANSACTIONS = "max_transactions"
    DEADLOCK = "deadlock"


@dataclass(frozen=True)
class StepOutcome:
    """Result of one kernel step; no reason means the run goes on."""

    reason: Termination | None = None

    @property
    def terminated(self) -> bool:
        """Whether the run has stopped."""
        return self.reason is not None


CONTINUED = StepOutcome()


@dataclass(frozen=True)
class RunOutcome:
    """Summary of one finished run."""

    seed: int
    depth: int
    success: bool
    termination: Termination
    events: int
    sim_time: float
    blocks_mined: int
    transactions_created: int
    mblock: int | None = None
    success_time: float | None = None
    main_chain_length: int = 1
    pool_blocks: dict[int, int] = field(default_factory=dict)
    node_tips: dict[str, int] = field(default_factory=dict)
    node_lengths: dict[str, int] = field(default_factory=dict)
    trace: tuple[TraceEvent, ...] = ()


class Simulation:
    """One seeded replication of a scenario."""

    def __init__(
        self,
        config: ScenarioConfig,
        seed: int,
        *,
        depth: int | None = None,
        trace: bool = False,
        audit: bool = False,
    ) -> None:
        self.config = config
        self.seed = seed
        self.depth = config.depth if depth is None else depth
        self.audit = audit
        self.rate_model = config.rate_model
        bounds = config.bounds
        self.shared = SharedState(
            txpool=TxPool(bounds.max_transactions),
            counters=Counters(config.peers, bounds.max_transactions, bounds.max_blocks),
            rng=np.random.default_rng(seed),
            peers=config.peers,
            trace=EventTrace(enabled=trace),
        )
        self.queue = EventQueue()
        self.events = 0
        self.termination: Termination | None = None
        self.success_time: float | None = None
        self._initialized = False

        capacity = bounds.max_blocks
        self.peers: list[Peer] = [
            Peer(peer_id, config.peers, capacity) for peer_id in range(config.honest_peers)
        ]
        self.pools: list[Pool] = []
        self.malicious_pool: MaliciousPool | None = None
        self.malicious_peer: MaliciousPeer | None = None
        for pool_id, pool_spec in enumerate(config.pools, start=1):
            if pool_spec.malicious:
                self.malicious_pool = MaliciousPool(
                    pool_id, pool_spec.share, config.peers, capacity, self.depth
                )
            else:
                self.pools.append(Pool(pool_id, pool_spec.share, config.peers, capacity))
        if config.malicious_peer_id is not None:
            self.malicious_peer = MaliciousPeer(
                config.malicious_peer_id, config.peers, capacity, config.victim
            )
            self.malicious_peer.accomplice = self.malicious_pool

    @property
    def nodes(self) -> list[Node]:
        """Every actor in quiescence order."""
        nodes: list[Node] = [*self.peers, *self.pools]
        if self.malicious_peer is not None:
            nodes.append(self.malicious_peer)
        if self.malicious_pool is not None:
            nodes.append(self.malicious_pool)
        return nodes

    @property
    def all_pools(self) -> list[Pool]:
        """Honest pools, then the malicious pool."""
        if self.malicious_pool is None:
            return list(self.pools)
        return [*self.pools, self.malicious_pool]

    def initialize(self) -> None:
        """Reset every actor and settle the initial transitions."""
        for node in self.nodes:
            node.initialize()
        self._initialized = True
        self._settle()

    def _serve(self, num: int) -> Block | None:
        for node in self.nodes:
            block = node.view.serve_block(num)
            if block is not None:
                return block
        return None

    def _resolve_orphans(self, node: Node) -> bool:
        parent = node.view.first_orphan_parent()
        if parent is None:
            return False
        block = self._serve(parent)
        if block is None:
            # Retried on the next sweep.
            logger.debug("%s could not obtain block %d", node.name, parent)
            return False
        before = len(node.view)
        node.view.absorb_served_block(block)
        self.shared.trace.record(node.name, "absorb_served", block=block.num, tx=block.tx.id)
        return len(node.view) != before

    def _settle(self) -> None:
        """Run instantaneous transitions until none is enabled, then arm miners."""
        fired = True
        while fired:
            fired = False
            self.events += 1
            for node in self.nodes:
                fired |= self._resolve_orphans(node)
                while node.step(self.shared):
                    fired = True
        for pool in self.all_pools:
            if pool.location is Location.MINE:
                if not self.queue.is_scheduled(pool.id, pool.attempts):
                    delay = sample_mining_time(self.rate_model, pool.share, self.shared.rng)
                    self.queue.schedule(pool.id, delay, pool.attempts)
            else:
                self.queue.cancel(pool.id)

    def _pool(self, pool_id: int) -> Pool:
        return next(pool for pool in self.all_pools if pool.id == pool_id)

    def _terminate(self, reason: Termination) -> StepOutcome:
        self.termination = reason
        if reason is Termination.DEADLOCK:
            logger.warning("Run with seed %d deadlocked after %d events", self.seed, self.events)
        return StepOutcome(reason)

    def double_spend_detected(self) -> bool:
        """Whether the duplicate's block is on the malicious pool's main chain."""
        mpool = self.malicious_pool
        if mpool is None or mpool.mblock is None:
            return False
        return mpool.view.check_block_in_chain(mpool.mblock)

    def step(self) -> StepOutcome:
        """Fire the earliest mining timer, broadcast its block and settle."""
        if self.termination is not None:
            return StepOutcome(self.termination)
        if not self._initialized:
            self.initialize()
        if self.events >= self.config.bounds.max_events:
            return self._terminate(Termination.MAX_EVENTS)

        fired = self.queue.pop()
        if fired is None:
            if not self.shared.counters.tx_available:
                return self._terminate(Termination.MAX_TRANSACTIONS)
            return self._terminate(Termination.DEADLOCK)
        when, pool_id = fired
        self.shared.trace.now = when
        self.events += 1
        miner = self._pool(pool_id)
        try:
            block = miner.complete_block(self.shared)
            for node in self.nodes:
                if node is not miner:
                    node.receive_block(block, self.shared)
            self._settle()
        except BoundExhaustedError as ex:
            return self._terminate(Termination(ex.bound))

        if self.audit:
            self.check_invariants()
        if self.double_spend_detected():
            self.success_time = when
            return self._terminate(Termination.SUCCESS)
        return CONTINUED

    def run(self) -> RunOutcome:
        """Step until termination and summarize."""
        while not self.step().terminated:
            pass
        return self.outcome()

    def outcome(self) -> RunOutcome:
        """Summary of the terminated run, read from the first node's view.

        Raises:
            RuntimeError: The run has not terminated yet.
        """
        if self.termination is None:
            msg = "Run has not terminated"
            raise RuntimeError(msg)
        reference = self.nodes[0].view
        counters = self.shared.counters
        return RunOutcome(
            seed=self.seed,
            depth=self.depth,
            success=self.termination is Termination.SUCCESS,
            termination=self.termination,
            events=self.events,
            sim_time=self.queue.now,
            blocks_mined=counters.block_num - 2,
            transactions_created=counters.tx_num - self.config.peers,
            mblock=None if self.malicious_pool is None else self.malicious_pool.mblock,
            success_time=self.success_time,
            main_chain_length=reference.length_longest,
            pool_blocks=dict(sorted(reference.creator_counts().items())),
            node_tips={node.name: node.view.longest_chain_tip() for node in self.nodes},
            node_lengths={node.name: node.view.length_longest for node in self.nodes},
            trace=tuple(self.shared.trace.events),
        )

    def check_invariants(self) -> None:
        """Audit chain structure, wallets, double-spend safety and honest-only convergence.

        Raises:
            InvariantViolationError: Any property fails.
        """
        for node in self.nodes:
            try:
                node.view.check_invariants()
            except ChainInvariantError as ex:
                msg = f"{node.name}: {ex}"
                raise InvariantViolationError(msg) from ex
            spent = [
                tx.spent_output
                for tx in node.view.main_chain_transactions()
                if not tx.input.is_filler
            ]
            if len(spent) != len(set(spent)):
                msg = f"{node.name}: main chain spends an output twice"
                raise InvariantViolationError(msg)
        for peer in self.peers:
            if any(entry.value < 0 for entry in peer.wallet):
                msg = f"{peer.name} holds a negative wallet entry"
                raise InvariantViolationError(msg)
        if self.config.attack_enabled:
            return
        tips = {node.view.longest_chain_tip() for node in self.nodes}
        if len(tips) != 1:
            msg = f"Honest nodes disagree on the main chain tip: {sorted(tips)}"
            raise InvariantViolationError(msg)
        on_chain = {tx.id for tx in self.nodes[0].view.main_chain_transactions()}
        in_flight = sum(
            tx.total_value
            for tx in self.shared.txpool
            if tx.status is not TxStatus.INVALID and tx.id not in on_chain
        )
        total = sum(peer.balance for peer in self.peers) + in_flight
        granted = sum(endowment(peer_id).total_value for peer_id in range(self.config.peers))
        if total != granted:
            msg = f"Coins are not conserved: {total} in wallets and in flight"
            raise InvariantViolationError(msg)


def run(
    config: ScenarioConfig,
    seed: int,
    *,
    depth: int | None = None,
    trace: bool = False,
    audit: bool = False,
) -> RunOutcome:
    """Run one replication to termination; identical inputs give identical outcomes."""
    outcome = Simulation(config, seed, depth=depth, trace=trace, audit=audit).run()
    logger.debug(
        "Seed %d depth %d finished: %s after %d events",
        seed,
        outcome.depth,
        outcome.termination.value,
        outcome.events,
    )
    return outcome


def oracle_race(q: float, z: int, seed: int, *, max_blocks: int = 200) -> bool:
    """Race an always-mining attacker against an always-mining honest side.

    The honest branch starts ``z`` blocks ahead of the fork point. There is no
    broadcast or verification: each side extends its own branch until the
    attacker's branch is strictly longer or ``max_blocks`` blocks were mined.
    """
    if not 0 < q < 1 or z < 0:
        msg = f"Need 0 < q < 1 and z >= 0, got q={q}, z={z}"
        raise ValueError(msg)
    rng = np.random.default_rng(seed)
    shares = {_ORACLE_HONEST: 1 - q, _ORACLE_ATTACKER: q}
    # Only relative rates matter: one hash per second per unit of difficulty.
    rate_model = RateModel(difficulty=1.0, network_hashrate=float(HASHES_PER_DIFFICULTY))
    counters = Counters(peers=0, max_transactions=z + max_blocks + 1, max_blocks=z + max_blocks + 2)
    view = BlockChainView(capacity=z + max_blocks + 1)
    view.init_chain()

    def extend(parent: int, creator: int) -> int:
        num = counters.next_block_number()
        view.add_block(Block(num, parent, filler(counters.next_tx_number(), 0), creator))
        return num

    fork_base = view.longest_chain_tip()
    for _ in range(z):
        extend(view.longest_chain_tip(), _ORACLE_HONEST)
    honest_tip = view.longest_chain_tip()
    attacker_tip = fork_base
    first_attacker_block: int | None = None

    queue = EventQueue()
    for side, share in shares.items():
        queue.schedule(side, sample_mining_time(rate_model, share, rng), 0)
    for _ in range(max_blocks):
        fired = queue.pop()
        if fired is None:
            break
        _, side = fired
        if side == _ORACLE_ATTACKER:
            attacker_tip = extend(attacker_tip, side)
            first_attacker_block = first_attacker_block or attacker_tip
            if view.check_block_in_chain(first_attacker_block):
                return True
        else:
            honest_tip = extend(honest_tip, side)
        queue.schedule(side, sample_mining_time(rate_model, shares[side], rng), 0)
    return False
