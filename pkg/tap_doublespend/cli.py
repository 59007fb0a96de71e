"""Command-line front end for the double-spend experiments."""

from __future__ import annotations

import csv
import functools
import io
import json
import logging
from pathlib import Path
from typing import TYPE_CHECKING, Any

import click
from singer_sdk.exceptions import ConfigValidationError

from tap_doublespend import engine, experiment
from tap_doublespend.config import ScenarioConfig
from tap_doublespend.exceptions import SimulationError

if TYPE_CHECKING:
    from collections.abc import Callable, Mapping, Sequence

    from tap_doublespend.experiment import BlockShare, EstimateResult

logger = logging.getLogger(__name__)

CONFIG_ENVVAR = "DOUBLESPEND_CONFIG"
FORMATS = ("table", "csv", "json")

Record = dict[str, Any]


class DepthRange(click.ParamType):
    """A confirmation depth ``a`` or an inclusive range ``a..b``."""

    name = "depth"

    def convert(
        self,
        value: Any,
        param: click.Parameter | None,
        ctx: click.Context | None,
    ) -> tuple[int, int]:
        """Parse ``a`` or ``a..b`` into an inclusive pair."""
        if isinstance(value, tuple):
            return value
        low, _, high = str(value).partition("..")
        try:
            depths = (int(low), int(high or low))
        except ValueError:
            self.fail(f"{value!r} is not a depth or an a..b range", param, ctx)
        if depths[0] < 1 or depths[0] > depths[1]:
            self.fail(f"{value!r} must satisfy 1 <= a <= b", param, ctx)
        return depths


class FloatList(click.ParamType):
    """Comma-separated floats, e.g. ``0.18,0.22,0.10,0.50``."""

    name = "floats"

    def convert(
        self,
        value: Any,
        param: click.Parameter | None,
        ctx: click.Context | None,
    ) -> tuple[float, ...]:
        """Parse a comma-separated list."""
        if isinstance(value, tuple):
            return value
        try:
            return tuple(float(item) for item in str(value).split(",") if item.strip())
        except ValueError:
            self.fail(f"{value!r} is not a comma-separated list of numbers", param, ctx)


def scenario_options(command: Callable[..., Any]) -> Callable[..., Any]:
    """Attach the scenario flags shared by every simulating subcommand."""
    options = [
        click.option(
            "--config",
            "config_path",
            type=click.Path(exists=True, dir_okay=False, path_type=Path),
            envvar=CONFIG_ENVVAR,
            help=f"JSON scenario file (default from ${CONFIG_ENVVAR}).",
        ),
        click.option("--depth", type=DepthRange(), help="Confirmation depth a or range a..b."),
        click.option("--shares", type=FloatList(), help="Pool shares, comma-separated."),
        click.option(
            "--malicious-pool",
            type=int,
            help="Id of the malicious pool (from 1); 0 runs an honest-only network.",
        ),
        click.option("--replications", type=int, help="Seeded runs per depth."),
        click.option("--seed", type=int, help="Master seed."),
        click.option("--max-events", type=int, help="Event bound per run."),
        click.option("--max-blocks", type=int, help="Block bound per run."),
        click.option("--max-transactions", type=int, help="Transaction bound per run."),
        click.option("--workers", type=int, help="Worker processes for replications."),
        click.option("--trace", is_flag=True, help="Log every state transition."),
    ]
    for option in reversed(options):
        command = option(command)

    @functools.wraps(command)
    def wrapper(**kwargs: Any) -> Any:
        overrides = {key: kwargs.pop(key) for key in _SCENARIO_KEYS}
        _configure_logging(trace=overrides.pop("trace"))
        return command(scenario=load_scenario(**overrides), **kwargs)

    return wrapper


_SCENARIO_KEYS = (
    "config_path",
    "depth",
    "shares",
    "malicious_pool",
    "replications",
    "seed",
    "max_events",
    "max_blocks",
    "max_transactions",
    "workers",
    "trace",
)


def output_options(command: Callable[..., Any]) -> Callable[..., Any]:
    """Add ``--out`` and ``--format`` to a result command."""
    command = click.option(
        "--out",
        type=click.Path(dir_okay=False, writable=True, path_type=Path),
        help="Write results to this file; the table still goes to standard output.",
    )(command)
    return click.option(
        "--format",
        "fmt",
        type=click.Choice(FORMATS),
        default="table",
        show_default=True,
    )(command)


def _configure_logging(*, trace: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if trace else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if not trace:
        # Per-transition records are only wanted when tracing.
        logging.getLogger("tap_doublespend.actors").setLevel(logging.INFO)


def _merge_overrides(mapping: dict[str, Any], overrides: Mapping[str, Any]) -> dict[str, Any]:
    merged = dict(mapping)
    if overrides["depth"] is not None:
        low, high = overrides["depth"]
        merged["depth"] = low
        merged["depths"] = [low, high]
    for key in ("replications", "seed", "workers"):
        if overrides[key] is not None:
            merged[key] = overrides[key]
    bounds = dict(merged.get("bounds") or {})
    for key in ("max_events", "max_blocks", "max_transactions"):
        if overrides[key] is not None:
            bounds[key] = overrides[key]
    merged["bounds"] = bounds

    shares = overrides["shares"]
    malicious_pool = overrides["malicious_pool"]
    if shares is None and malicious_pool is None:
        return merged
    pools = merged.get("pools") or ScenarioConfig().to_mapping()["pools"]
    if shares is None:
        shares = tuple(float(pool["share"]) for pool in pools)
    if malicious_pool is None:
        malicious_pool = next(
            (index for index, pool in enumerate(pools, start=1) if pool.get("malicious")),
            0,
        )
        malicious_pool = min(malicious_pool, len(shares))
    merged["pools"] = [
        {"share": share, "malicious": index == malicious_pool}
        for index, share in enumerate(shares, start=1)
    ]
    peers = dict(merged.get("peers") or {})
    if malicious_pool == 0:
        defaults = ScenarioConfig()
        honest = int(peers.get("honest", defaults.honest_peers))
        malicious = int(peers.get("malicious", defaults.malicious_peers))
        peers = {"honest": honest + malicious, "malicious": 0}
    merged["peers"] = peers
    return merged


def load_scenario(config_path: Path | None = None, **overrides: Any) -> ScenarioConfig:
    """Read the scenario file, apply flag overrides and validate.

    Raises:
        click.ClickException: The file cannot be read or the scenario is invalid.
    """
    mapping: dict[str, Any] = {}
    if config_path is not None:
        try:
            mapping = json.loads(config_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as ex:
            msg = f"Cannot read scenario file {config_path}: {ex}"
            raise click.ClickException(msg) from ex
        if not isinstance(mapping, dict):
            msg = f"Scenario file {config_path} must hold a JSON object"
            raise click.ClickException(msg)
    defaults = dict.fromkeys(_SCENARIO_KEYS[1:-1])
    try:
        return ScenarioConfig.from_mapping(_merge_overrides(mapping, {**defaults, **overrides}))
    except (AttributeError, KeyError, TypeError, ValueError) as ex:
        msg = f"Malformed scenario: {ex}"
        raise click.ClickException(msg) from ex
    except ConfigValidationError as ex:
        msg = f"Invalid scenario: {ex}"
        raise click.ClickException(msg) from ex


def estimate_table(records: Sequence[Record]) -> str:
    """Render estimates with the Confirmations / Probability / CI / Runs columns."""
    lead = ["Share"] if "malicious_share" in records[0] else []
    rows = [[*lead, "Confirmations", "Probability", "CI", "Runs"]]
    for record in records:
        share = [f"{record['malicious_share']:.2f}"] if lead else []
        rows.append(
            [
                *share,
                str(record["depth"]),
                f"{record['point']:.6f}",
                f"[{record['ci_low']:.6f}, {record['ci_high']:.6f}]",
                str(record["runs"]),
            ]
        )
    return _render(rows)


def block_share_table(records: Sequence[Record]) -> str:
    """Render block-share records with Pool / Blocks / Fraction columns."""
    rows = [["Pool", "Blocks", "Fraction"]]
    rows.extend(
        [str(record["pool_id"]), str(record["blocks"]), f"{record['fraction']:.4f}"]
        for record in records
    )
    return _render(rows)


def outcome_table(records: Sequence[Record]) -> str:
    """Render records with one column per key."""
    keys = list(records[0])
    rows = [keys]
    rows.extend(
        ["" if record[key] is None else str(record[key]) for key in keys] for record in records
    )
    return _render(rows)


def _render(rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(row[column]) for row in rows) for column in range(len(rows[0]))]
    return "\n".join(
        "  ".join(cell.ljust(width) for cell, width in zip(row, widths, strict=True)).rstrip()
        for row in rows
    )


def _serialize(
    records: Sequence[Record],
    fmt: str,
    table: Callable[[Sequence[Record]], str],
) -> str:
    if fmt == "json":
        return json.dumps(list(records), indent=2) + "\n"
    if fmt == "csv":
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=list(records[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(records)
        return buffer.getvalue()
    return table(records) + "\n"


def emit(
    records: Sequence[Record],
    fmt: str,
    path: Path | None,
    table: Callable[[Sequence[Record]], str] = outcome_table,
) -> None:
    """Write ``records`` as CSV, JSON or a table, to ``path`` or standard output.

    When ``path`` is given the human-readable table is still printed.

    Raises:
        click.ClickException: There is nothing to emit or the file cannot be written.
    """
    if not records:
        msg = "No results to emit"
        raise click.ClickException(msg)
    text = _serialize(records, fmt, table)
    if path is None:
        click.echo(text, nl=False)
        return
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as ex:
        msg = f"Cannot write {path}: {ex}"
        raise click.ClickException(msg) from ex
    click.echo(table(records))
    logger.info("Wrote %d records to %s", len(records), path)


def _estimate_records(results: Sequence[EstimateResult]) -> list[Record]:
    return [result.to_record() for result in results]


def _block_share_records(shares: Sequence[BlockShare]) -> list[Record]:
    return [share.to_record() for share in shares]


def _guard(action: Callable[[], Any]) -> Any:
    try:
        return action()
    except (SimulationError, ValueError) as ex:
        raise click.ClickException(str(ex)) from ex


@click.group()
@click.version_option(package_name="tap-doublespend")
def cli() -> None:
    """Simulate double-spend attacks on a Bitcoin network and estimate their success."""


@cli.command()
@scenario_options
@output_options
@click.option("--dump-config", is_flag=True, help="Print the effective scenario as JSON and exit.")
def simulate(scenario: ScenarioConfig, fmt: str, out: Path | None, *, dump_config: bool) -> None:
    """Run one seeded replication at the first requested depth."""
    if dump_config:
        click.echo(json.dumps(scenario.to_mapping(), indent=2))
        return
    outcome = _guard(lambda: engine.run(scenario, scenario.seed))
    emit([experiment.outcome_record(outcome)], fmt, out)


@cli.command()
@scenario_options
@output_options
def estimate(scenario: ScenarioConfig, fmt: str, out: Path | None) -> None:
    """Estimate the double-spend probability for each confirmation depth."""
    results = _guard(lambda: experiment.estimate(scenario))
    emit(_estimate_records(results), fmt, out, estimate_table)


@cli.command()
@scenario_options
@output_options
@click.option(
    "--malicious-shares",
    type=FloatList(),
    default="0.1,0.2,0.3,0.4",
    show_default=True,
    help="Malicious pool shares to visit.",
)
def sweep(
    scenario: ScenarioConfig,
    fmt: str,
    out: Path | None,
    malicious_shares: tuple[float, ...],
) -> None:
    """Estimate the double-spend probability as the malicious pool's share varies."""
    try:
        results = experiment.estimate_hashrates(scenario, malicious_shares)
    except ConfigValidationError as ex:
        raise click.ClickException(str(ex)) from ex
    emit(_estimate_records(results), fmt, out, estimate_table)


@cli.command("block-shares")
@scenario_options
@output_options
def block_shares(scenario: ScenarioConfig, fmt: str, out: Path | None) -> None:
    """Count main-chain blocks per pool over honest-only replications."""
    shares = _guard(lambda: experiment.block_share_report(scenario))
    emit(_block_share_records(shares), fmt, out, block_share_table)


@cli.command()
@click.option("--q", "q", type=click.FloatRange(0, 1, min_open=True, max_open=True), required=True)
@click.option("--z", "z", type=click.IntRange(min=0), required=True)
@click.option("--replications", type=click.IntRange(min=1), help="Also simulate this many races.")
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--max-blocks", type=click.IntRange(min=1), default=200, show_default=True)
def oracle(q: float, z: int, replications: int | None, seed: int, max_blocks: int) -> None:
    """Print the probability that an attacker with share Q, Z blocks behind, ever gets ahead."""
    click.echo(f"{experiment.catchup_oracle(q, z)}")
    if replications is None:
        return
    result = experiment.oracle_frequency(q, z, replications, seed, max_blocks=max_blocks)
    click.echo(estimate_table(_estimate_records([result])))
    bounded = experiment.catchup_oracle(q, z, horizon=max_blocks)
    click.echo(f"Within {max_blocks} blocks: {bounded}")


@cli.command()
@scenario_options
def trace(scenario: ScenarioConfig) -> None:
    """Run one replication and print every state transition."""
    outcome = _guard(lambda: engine.run(scenario, scenario.seed, trace=True))
    for event in outcome.trace:
        click.echo(str(event))
    click.echo(f"# {outcome.termination.value} after {outcome.events} events", err=True)
