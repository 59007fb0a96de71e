"""Monte Carlo harness: replicated runs, probability estimates and reports."""

from __future__ import annotations

import logging
import math
import multiprocessing as mp
from collections import Counter
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any

import numpy as np
from scipy import stats

from tap_doublespend import engine

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence

    from tap_doublespend.config import ScenarioConfig
    from tap_doublespend.engine import RunOutcome

logger = logging.getLogger(__name__)

ORACLE_TOLERANCE = 1e-9
_ORACLE_MAX_ITERATIONS = 10_000_000
# Replication seeds for the block-share report live apart from depth-keyed seeds.
_BLOCK_SHARE_KEY = 0
SECONDS_PER_MINUTE = 60


@dataclass(frozen=True)
class EstimateResult:
    """Success frequency with an exact binomial confidence interval."""

    depth: int
    successes: int
    replications: int
    point: float
    ci_low: float
    ci_high: float
    confidence: float = 0.95
    malicious_share: float | None = None

    @classmethod
    def from_counts(
        cls,
        depth: int,
        successes: int,
        replications: int,
        confidence: float = 0.95,
        malicious_share: float | None = None,
    ) -> EstimateResult:
        """Build an estimate from a success count."""
        low, high = clopper_pearson(successes, replications, confidence)
        return cls(
            depth=depth,
            successes=successes,
            replications=replications,
            point=successes / replications,
            ci_low=low,
            ci_high=high,
            confidence=confidence,
            malicious_share=malicious_share,
        )

    @property
    def half_width(self) -> float:
        """Half the interval width."""
        return (self.ci_high - self.ci_low) / 2

    def overlaps(self, low: float, high: float) -> bool:
        """Whether the interval intersects ``[low, high]``."""
        return self.ci_low <= high and low <= self.ci_high

    def to_record(self) -> dict[str, Any]:
        """Stream and output record; ``malicious_share`` leads when set."""
        record: dict[str, Any] = {}
        if self.malicious_share is not None:
            record["malicious_share"] = self.malicious_share
        record.update(
            depth=self.depth,
            successes=self.successes,
            runs=self.replications,
            point=self.point,
            ci_low=self.ci_low,
            ci_high=self.ci_high,
        )
        return record


@dataclass(frozen=True)
class BlockShare:
    """Main-chain blocks created by one pool, summed over replications."""

    pool_id: int
    share: float
    blocks: int
    fraction: float

    def to_record(self) -> dict[str, Any]:
        """Stream and output record."""
        return {"pool_id": self.pool_id, "blocks": self.blocks, "fraction": self.fraction}


def clopper_pearson(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    """Exact two-sided binomial confidence interval for ``successes`` out of ``trials``."""
    if trials < 1 or not 0 <= successes <= trials:
        msg = f"Need 0 <= successes <= trials and trials >= 1, got {successes}/{trials}"
        raise ValueError(msg)
    alpha = 1 - confidence
    low = (
        0.0
        if successes == 0
        else float(stats.beta.ppf(alpha / 2, successes, trials - successes + 1))
    )
    high = (
        1.0
        if successes == trials
        else float(stats.beta.ppf(1 - alpha / 2, successes + 1, trials - successes))
    )
    return low, high


def replication_seed(master_seed: int, key: int, index: int) -> int:
    """Seed of one replication, derived from the master seed independently of run order."""
    sequence = np.random.SeedSequence(master_seed, spawn_key=(key, index))
    return int(sequence.generate_state(1)[0])


def success_predicate(outcome: RunOutcome) -> bool:
    """Whether the duplicate's block made the malicious pool's main chain before the end."""
    return outcome.mblock is not None and outcome.success


def outcome_record(outcome: RunOutcome) -> dict[str, Any]:
    """Flatten a run outcome into a per-replication record."""
    return {
        "depth": outcome.depth,
        "seed": outcome.seed,
        "success": outcome.success,
        "termination": outcome.termination.value,
        "events": outcome.events,
        "sim_time_minutes": outcome.sim_time / SECONDS_PER_MINUTE,
        "blocks_mined": outcome.blocks_mined,
        "transactions_created": outcome.transactions_created,
        "mblock": outcome.mblock,
        "main_chain_length": outcome.main_chain_length,
    }


def _run_one(job: tuple[ScenarioConfig, int, int]) -> RunOutcome:
    config, seed, depth = job
    return engine.run(config, seed, depth=depth)


def run_replications(
    config: ScenarioConfig,
    depth: int,
    *,
    key: int | None = None,
) -> list[RunOutcome]:
    """Run ``config.replications`` seeded replications, in parallel when ``workers > 1``.

    Outcomes come back in seed order whatever the scheduling.
    """
    seed_key = depth if key is None else key
    jobs = [
        (config, replication_seed(config.seed, seed_key, index), depth)
        for index in range(config.replications)
    ]
    if config.workers == 1:
        return [_run_one(job) for job in jobs]
    chunksize = max(1, len(jobs) // (config.workers * 4))
    with mp.get_context("spawn").Pool(config.workers) as pool:
        return pool.map(_run_one, jobs, chunksize=chunksize)


def summarize(
    depth: int,
    outcomes: Sequence[RunOutcome],
    confidence: float = 0.95,
    malicious_share: float | None = None,
) -> EstimateResult:
    """Fold replication outcomes into a success-probability estimate."""
    successes = sum(success_predicate(outcome) for outcome in outcomes)
    return EstimateResult.from_counts(
        depth, successes, len(outcomes), confidence, malicious_share=malicious_share
    )


def estimate(config: ScenarioConfig, depths: Iterable[int] | None = None) -> list[EstimateResult]:
    """Estimate the double-spend probability for each confirmation depth."""
    results = []
    for depth in config.depth_range if depths is None else depths:
        result = summarize(depth, run_replications(config, depth), config.confidence)
        logger.info(
            "Depth %d: %d/%d successes, p=%.4f [%.4f, %.4f]",
            depth,
            result.successes,
            result.replications,
            result.point,
            result.ci_low,
            result.ci_high,
        )
        results.append(result)
    return results


def estimate_hashrates(
    config: ScenarioConfig,
    shares: Sequence[float],
    depth: int | None = None,
) -> list[EstimateResult]:
    """Estimate the double-spend probability as the malicious pool's share varies."""
    depth = config.depth if depth is None else depth
    results = []
    for share in shares:
        outcomes = run_replications(config.with_malicious_share(share), depth)
        result = summarize(depth, outcomes, config.confidence, malicious_share=share)
        logger.info(
            "Malicious share %.2f: %d/%d successes", share, result.successes, result.replications
        )
        results.append(result)
    return results


def block_share_report(config: ScenarioConfig) -> list[BlockShare]:
    """Main-chain blocks per pool over honest-only replications of ``config``."""
    honest = config.honest_only()
    totals: Counter[int] = Counter()
    for outcome in run_replications(honest, honest.depth, key=_BLOCK_SHARE_KEY):
        totals.update(outcome.pool_blocks)
    blocks = sum(totals.values())
    logger.info("Counted %d main-chain blocks over %d runs", blocks, honest.replications)
    return [
        BlockShare(
            pool_id=pool_id,
            share=pool.share,
            blocks=totals[pool_id],
            fraction=totals[pool_id] / blocks if blocks else 0.0,
        )
        for pool_id, pool in enumerate(honest.pools, start=1)
    ]


def catchup_oracle(
    q: float,
    z: int,
    tolerance: float = ORACLE_TOLERANCE,
    *,
    horizon: int | None = None,
) -> float:
    """Probability that an attacker ``z`` blocks behind gets strictly ahead.

    Each new block is the attacker's with probability ``q``. The deficit
    random walk is iterated with absorption at "one block ahead" until the
    mass still able to catch up is below ``tolerance``; deficits beyond a
    cut-off whose catch-up chance is below ``tolerance`` are dropped.

    With ``horizon`` the walk stops after that many blocks, which gives the
    exact catch-up chance of a race truncated at ``horizon`` blocks for any
    ``q``, including the critical ``q = 0.5``.
    """
    if not 0 < q < 1 or z < 0:
        msg = f"Need 0 < q < 1 and z >= 0, got q={q}, z={z}"
        raise ValueError(msg)
    if horizon is not None and horizon < 0:
        msg = f"Need horizon >= 0, got {horizon}"
        raise ValueError(msg)
    p = 1 - q
    if horizon is not None:
        # Deficits past z + horizon cannot be recovered in the remaining blocks.
        cutoff = z + horizon + 1
        reach = np.ones(cutoff + 1)
        tolerance = 0.0
        iterations = horizon
    elif q >= 0.5:  # noqa: PLR2004
        return 1.0
    else:
        ratio = q / p
        cutoff = z + math.ceil(math.log(tolerance) / math.log(ratio)) + 1
        # Chance of ever getting ahead from each deficit bounds what live mass can still add.
        reach = ratio ** (np.arange(cutoff + 1) + 1)
        iterations = _ORACLE_MAX_ITERATIONS
    live = np.zeros(cutoff + 1)
    live[z] = 1.0
    caught = 0.0
    for _ in range(iterations):
        if float(live @ reach) <= tolerance:
            break
        caught += q * live[0]
        step = np.zeros_like(live)
        step[:-1] += q * live[1:]
        step[1:] += p * live[:-1]
        live = step
    return caught


def oracle_frequency(
    q: float,
    z: int,
    replications: int,
    seed: int,
    *,
    max_blocks: int = 200,
    confidence: float = 0.95,
) -> EstimateResult:
    """Catch-up frequency of the simplified always-mining race, for comparison with the oracle."""
    wins = sum(
        engine.oracle_race(q, z, replication_seed(seed, z, index), max_blocks=max_blocks)
        for index in range(replications)
    )
    return EstimateResult.from_counts(z, wins, replications, confidence)
