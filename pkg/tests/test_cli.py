"""Tests for the command-line front end."""

import json
from pathlib import Path

import click
import pytest
from click.testing import CliRunner

from tap_doublespend.cli import cli, emit, estimate_table, load_scenario
from tap_doublespend.config import ScenarioConfig

FAST = ["--replications", "2", "--max-blocks", "30", "--max-transactions", "30"]


@pytest.fixture
def runner() -> CliRunner:
    return CliRunner()


class TestCommands:
    """Test the subcommands end to end."""

    def test_oracle_critical_walk(self, runner: CliRunner) -> None:
        """Test an even split always catches up."""
        result = runner.invoke(cli, ["oracle", "--q", "0.5", "--z", "3"])
        assert result.exit_code == 0
        assert result.output == "1.0\n"

    def test_oracle_with_simulation(self, runner: CliRunner) -> None:
        """Test the simulated races are tabulated under the closed form."""
        result = runner.invoke(
            cli, ["oracle", "--q", "0.1", "--z", "0", "--replications", "50"]
        )
        assert result.exit_code == 0
        lines = result.output.splitlines()
        assert float(lines[0]) == pytest.approx(0.1 / 0.9)
        assert "Confirmations" in lines[1]
        assert lines[-1].startswith("Within 200 blocks: ")
        assert float(lines[-1].split(": ")[1]) == pytest.approx(0.1 / 0.9, abs=1e-9)

    def test_estimate_csv(self, runner: CliRunner) -> None:
        """Test one CSV row per requested depth."""
        result = runner.invoke(cli, ["estimate", "--depth", "1..2", "--format", "csv", *FAST])
        assert result.exit_code == 0, result.output
        lines = [line for line in result.output.splitlines() if line]
        assert lines[0] == "depth,successes,runs,point,ci_low,ci_high"
        assert [line.split(",")[0] for line in lines[1:]] == ["1", "2"]

    def test_estimate_table_to_file(self, runner: CliRunner, tmp_path: Path) -> None:
        """Test JSON goes to the file and the table to standard output."""
        out = tmp_path / "estimates.json"
        result = runner.invoke(
            cli, ["estimate", "--depth", "2", "--format", "json", "--out", str(out), *FAST]
        )
        assert result.exit_code == 0, result.output
        records = json.loads(out.read_text(encoding="utf-8"))
        assert [record["depth"] for record in records] == [2]
        assert records[0]["runs"] == 2  # noqa: PLR2004
        assert "Confirmations" in result.output
        assert "Probability" in result.output

    def test_block_shares(self, runner: CliRunner) -> None:
        """Test one row per pool."""
        result = runner.invoke(cli, ["block-shares", "--format", "json", *FAST])
        assert result.exit_code == 0, result.output
        records = json.loads(result.output)
        assert [record["pool_id"] for record in records] == [1, 2, 3, 4]

    def test_sweep(self, runner: CliRunner) -> None:
        """Test the sweep table leads with the malicious share."""
        result = runner.invoke(
            cli, ["sweep", "--malicious-shares", "0,0.3", "--depth", "1", *FAST]
        )
        assert result.exit_code == 0, result.output
        assert result.output.splitlines()[0].startswith("Share")

    def test_simulate(self, runner: CliRunner) -> None:
        """Test a single run is reported as a JSON record."""
        result = runner.invoke(cli, ["simulate", "--seed", "3", "--format", "json", *FAST])
        assert result.exit_code == 0, result.output
        (record,) = json.loads(result.output)
        assert record["seed"] == 3  # noqa: PLR2004
        assert record["depth"] == 1

    def test_trace(self, runner: CliRunner) -> None:
        """Test transitions are printed one per line."""
        result = runner.invoke(cli, ["trace", "--seed", "1", *FAST])
        assert result.exit_code == 0, result.output
        assert "create_transaction" in result.output
        assert "mined" in result.output


class TestConfiguration:
    """Test config files, overrides and exit codes."""

    def test_dump_config_round_trip(self, runner: CliRunner, tmp_path: Path) -> None:
        """Test a dumped config reparses to the same scenario."""
        result = runner.invoke(cli, ["simulate", "--dump-config", "--seed", "8"])
        assert result.exit_code == 0
        path = tmp_path / "scenario.json"
        path.write_text(result.output, encoding="utf-8")
        assert load_scenario(path) == ScenarioConfig(seed=8)
        again = runner.invoke(cli, ["simulate", "--dump-config", "--config", str(path)])
        assert again.output == result.output

    def test_config_from_environment(self, runner: CliRunner, tmp_path: Path) -> None:
        """Test the default config path comes from the environment."""
        path = tmp_path / "scenario.json"
        path.write_text(json.dumps({"seed": 77, "depth": 2}), encoding="utf-8")
        result = runner.invoke(
            cli, ["simulate", "--dump-config"], env={"DOUBLESPEND_CONFIG": str(path)}
        )
        dumped = json.loads(result.output)
        assert dumped["seed"] == 77  # noqa: PLR2004
        assert dumped["depth"] == 2  # noqa: PLR2004

    def test_overrides_win(self, tmp_path: Path) -> None:
        """Test flags override file values."""
        path = tmp_path / "scenario.json"
        path.write_text(json.dumps({"seed": 77, "bounds": {"max_blocks": 90}}), encoding="utf-8")
        config = load_scenario(path, seed=5, max_transactions=50, depth=(2, 3))
        assert config.seed == 5  # noqa: PLR2004
        assert config.bounds.max_blocks == 90  # noqa: PLR2004
        assert config.bounds.max_transactions == 50  # noqa: PLR2004
        assert config.depths == (2, 3)

    def test_shares_and_malicious_pool(self) -> None:
        """Test --shares keeps a malicious pool and --malicious-pool 0 disables it."""
        config = load_scenario(shares=(0.3, 0.7))
        assert config.shares == (0.3, 0.7)
        assert config.malicious_pool_id == 2  # noqa: PLR2004
        honest = load_scenario(malicious_pool=0)
        assert not honest.attack_enabled
        assert honest.peers == 4  # noqa: PLR2004

    def test_invalid_shares_exit_1(self, runner: CliRunner) -> None:
        """Test a failed validation exits with status 1."""
        result = runner.invoke(cli, ["estimate", "--shares", "0.6,0.6"])
        assert result.exit_code == 1
        assert "Invalid scenario" in result.output

    @pytest.mark.parametrize(
        "args",
        [
            ["estimate", "--depth", "3..1"],
            ["estimate", "--depth", "many"],
            ["estimate", "--bogus"],
            ["oracle", "--q", "1.5", "--z", "1"],
        ],
    )
    def test_usage_errors_exit_2(self, runner: CliRunner, args: list[str]) -> None:
        """Test malformed flags are usage errors."""
        assert runner.invoke(cli, args).exit_code == 2  # noqa: PLR2004

    def test_unreadable_config_exit_1(self, runner: CliRunner, tmp_path: Path) -> None:
        """Test a broken config file is a runtime failure."""
        path = tmp_path / "broken.json"
        path.write_text("{not json", encoding="utf-8")
        result = runner.invoke(cli, ["simulate", "--config", str(path)])
        assert result.exit_code == 1


class TestEmit:
    """Test result emission."""

    def test_refuses_empty_results(self) -> None:
        """Test an empty result set is an error."""
        with pytest.raises(click.ClickException, match="No results"):
            emit([], "csv", None)

    def test_estimate_table_columns(self) -> None:
        """Test the estimate table header."""
        table = estimate_table(
            [{"depth": 1, "successes": 9, "runs": 10, "point": 0.9, "ci_low": 0.5, "ci_high": 1.0}]
        )
        header, row = table.splitlines()
        assert header.split() == ["Confirmations", "Probability", "CI", "Runs"]
        assert row.split()[0] == "1"
        assert "[0.500000, 1.000000]" in row
