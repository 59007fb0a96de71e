"""Scenario configuration, run bounds and the hash-rate to mining-rate model."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

from singer_sdk.exceptions import ConfigValidationError

from tap_doublespend.model import DEFAULT_MAX_BLOCKS, DEFAULT_MAX_TRANSACTIONS

if TYPE_CHECKING:
    from collections.abc import Mapping

HASHES_PER_DIFFICULTY = 2**32
GIGA = 1e9

DEFAULT_DIFFICULTY = 52_278_304_845.59
DEFAULT_HASHRATE_GHS = 413_204_212.12
DEFAULT_MAX_EVENTS = 500_000
DEFAULT_SHARES = (0.18, 0.22, 0.10, 0.50)
DEFAULT_MALICIOUS_POOL = 4
DEFAULT_REPLICATIONS = 1000
DEFAULT_SEED = 42
DEFAULT_CONFIDENCE = 0.95

_SHARE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class RateModel:
    """Mining rate of a pool from its share of the network hash-rate.

    ``rate = share * hashrate / (difficulty * 2**32)`` blocks per second.
    """

    difficulty: float = DEFAULT_DIFFICULTY
    network_hashrate: float = DEFAULT_HASHRATE_GHS * GIGA

    def rate(self, share: float) -> float:
        """Blocks per second found by a pool with ``share``."""
        return share * self.network_hashrate / (self.difficulty * HASHES_PER_DIFFICULTY)

    def mean_time(self, share: float) -> float:
        """Expected seconds for a pool with ``share`` to find a block."""
        if share <= 0:
            return math.inf
        return 1.0 / self.rate(share)


@dataclass(frozen=True)
class RunBounds:
    """Limits after which a run halts."""

    max_events: int = DEFAULT_MAX_EVENTS
    max_transactions: int = DEFAULT_MAX_TRANSACTIONS
    max_blocks: int = DEFAULT_MAX_BLOCKS


@dataclass(frozen=True)
class PoolSpec:
    """One mining pool: its hash-rate share and whether it attacks."""

    share: float
    malicious: bool = False


def _default_pools() -> tuple[PoolSpec, ...]:
    return tuple(
        PoolSpec(share, malicious=index == DEFAULT_MALICIOUS_POOL)
        for index, share in enumerate(DEFAULT_SHARES, start=1)
    )


@dataclass(frozen=True)
class ScenarioConfig:
    """Inputs of an experiment.

    Pools are numbered from 1 in list order, peers from 0 with honest peers
    first; the malicious peer, if any, has the highest number.
    """

    pools: tuple[PoolSpec, ...] = field(default_factory=_default_pools)
    honest_peers: int = 3
    malicious_peers: int = 1
    difficulty: float = DEFAULT_DIFFICULTY
    hashrate: float = DEFAULT_HASHRATE_GHS
    depth: int = 1
    depths: tuple[int, int] = (1, 4)
    victim: int = 0
    bounds: RunBounds = field(default_factory=RunBounds)
    replications: int = DEFAULT_REPLICATIONS
    seed: int = DEFAULT_SEED
    confidence: float = DEFAULT_CONFIDENCE
    workers: int = 1

    @property
    def peers(self) -> int:
        """Total number of peers."""
        return self.honest_peers + self.malicious_peers

    @property
    def shares(self) -> tuple[float, ...]:
        """Pool shares in pool id order."""
        return tuple(pool.share for pool in self.pools)

    @property
    def rate_model(self) -> RateModel:
        """Rate model for this difficulty and hash-rate."""
        return RateModel(difficulty=self.difficulty, network_hashrate=self.hashrate * GIGA)

    @property
    def malicious_pool_id(self) -> int | None:
        """Id of the attacking pool, if any."""
        return next(
            (pool_id for pool_id, pool in enumerate(self.pools, start=1) if pool.malicious),
            None,
        )

    @property
    def malicious_peer_id(self) -> int | None:
        """Id of the colluding peer, if any."""
        return self.peers - 1 if self.malicious_peers else None

    @property
    def attack_enabled(self) -> bool:
        """Whether a malicious pool takes part."""
        return self.malicious_pool_id is not None

    @property
    def depth_range(self) -> range:
        """Inclusive range of depths to estimate."""
        return range(self.depths[0], self.depths[1] + 1)

    def validate(self) -> None:
        """Check domain constraints.

        Raises:
            ConfigValidationError: Any constraint fails.
        """
        errors: list[str] = []
        if not self.pools:
            errors.append("at least one pool is required")
        if any(not 0 < pool.share <= 1 for pool in self.pools):
            errors.append(f"pool shares must be in (0, 1], got {list(self.shares)}")
        if sum(self.shares) > 1 + _SHARE_TOLERANCE:
            errors.append(f"pool shares sum to {sum(self.shares):g} > 1")
        malicious_pools = sum(pool.malicious for pool in self.pools)
        if malicious_pools > 1:
            errors.append("at most one malicious pool is supported")
        if self.malicious_peers not in {0, 1}:
            errors.append("at most one malicious peer is supported")
        if malicious_pools != self.malicious_peers:
            errors.append("a malicious pool and a malicious peer must be configured together")
        if self.honest_peers < 0 or self.peers < 1:
            errors.append("at least one peer is required")
        if not 0 <= self.victim < self.peers or self.victim == self.malicious_peer_id:
            errors.append(f"victim {self.victim} must be an honest peer")
        if self.depth < 1 or self.depths[0] < 1 or self.depths[0] > self.depths[1]:
            errors.append(f"confirmation depths must be >= 1, got {self.depth} and {self.depths}")
        if self.difficulty <= 0 or self.hashrate <= 0:
            errors.append("difficulty and hashrate must be positive")
        if min(dataclasses.astuple(self.bounds)) < 1:
            errors.append("bounds must be positive")
        if self.bounds.max_transactions <= self.peers:
            errors.append("max_transactions must exceed the number of peers")
        if self.replications < 1 or self.workers < 1:
            errors.append("replications and workers must be positive")
        if not 0 < self.confidence < 1:
            errors.append("confidence must be in (0, 1)")
        if errors:
            raise ConfigValidationError("; ".join(errors))

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any]) -> ScenarioConfig:
        """Build a validated config from plain settings, defaulting missing keys.

        Keys the simulator does not know (e.g. SDK settings) are ignored.

        Raises:
            ConfigValidationError: A value is malformed or a constraint fails.
        """
        defaults = cls()
        try:
            pools = (
                tuple(
                    PoolSpec(float(pool["share"]), bool(pool.get("malicious", False)))
                    for pool in mapping["pools"]
                )
                if mapping.get("pools") is not None
                else defaults.pools
            )
            peers = mapping.get("peers") or {}
            bounds = mapping.get("bounds") or {}
            depths = mapping.get("depths") or defaults.depths
            config = cls(
                pools=pools,
                honest_peers=int(peers.get("honest", defaults.honest_peers)),
                malicious_peers=int(peers.get("malicious", defaults.malicious_peers)),
                difficulty=float(mapping.get("difficulty", defaults.difficulty)),
                hashrate=float(mapping.get("hashrate", defaults.hashrate)),
                depth=int(mapping.get("depth", defaults.depth)),
                depths=(int(depths[0]), int(depths[1])),
                victim=int(mapping.get("victim", defaults.victim)),
                bounds=RunBounds(
                    max_events=int(bounds.get("max_events", defaults.bounds.max_events)),
                    max_transactions=int(
                        bounds.get("max_transactions", defaults.bounds.max_transactions)
                    ),
                    max_blocks=int(bounds.get("max_blocks", defaults.bounds.max_blocks)),
                ),
                replications=int(mapping.get("replications", defaults.replications)),
                seed=int(mapping.get("seed", defaults.seed)),
                confidence=float(mapping.get("confidence", defaults.confidence)),
                workers=int(mapping.get("workers", defaults.workers)),
            )
        except (KeyError, TypeError, ValueError, IndexError) as ex:
            msg = f"Malformed scenario config: {ex}"
            raise ConfigValidationError(msg) from ex
        config.validate()
        return config

    def to_mapping(self) -> dict[str, Any]:
        """Inverse of `from_mapping`."""
        return {
            "difficulty": self.difficulty,
            "hashrate": self.hashrate,
            "pools": [{"share": pool.share, "malicious": pool.malicious} for pool in self.pools],
            "peers": {"honest": self.honest_peers, "malicious": self.malicious_peers},
            "depth": self.depth,
            "depths": list(self.depths),
            "victim": self.victim,
            "bounds": dataclasses.asdict(self.bounds),
            "replications": self.replications,
            "seed": self.seed,
            "confidence": self.confidence,
            "workers": self.workers,
        }

    def honest_only(self) -> ScenarioConfig:
        """The same network with every pool and peer behaving honestly."""
        return dataclasses.replace(
            self,
            pools=tuple(PoolSpec(pool.share) for pool in self.pools),
            honest_peers=self.peers,
            malicious_peers=0,
        )

    def with_malicious_share(self, share: float) -> ScenarioConfig:
        """Give the malicious pool ``share`` and rescale the honest pools to keep the total.

        A share of 0 disables the attack.

        Raises:
            ConfigValidationError: No malicious pool is configured or the share is out of range.
        """
        pool_id = self.malicious_pool_id
        if pool_id is None:
            msg = "A hash-rate sweep needs a malicious pool"
            raise ConfigValidationError(msg)
        total = sum(self.shares)
        if len(self.pools) < 2 or not 0 <= share < total:  # noqa: PLR2004
            msg = f"Malicious share {share} must be in [0, {total:g}) next to honest pools"
            raise ConfigValidationError(msg)
        if share == 0:
            honest = tuple(pool for pool in self.pools if not pool.malicious)
            config = dataclasses.replace(self.honest_only(), pools=honest)
        else:
            honest_total = total - self.pools[pool_id - 1].share
            scale = (total - share) / honest_total
            pools = tuple(
                PoolSpec(share, malicious=True) if pool.malicious else PoolSpec(pool.share * scale)
                for pool in self.pools
            )
            config = dataclasses.replace(self, pools=pools)
        config.validate()
        return config
