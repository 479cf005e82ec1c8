"""End-to-end command-line runs against temp directories.

Everything here goes through cli.main() with an explicit argv, so the
exit-code contract and the on-disk artifact formats are what is tested,
not internal function calls.
"""

import json

import pytest

import rosbid
import rosbid.checks as checks
from rosbid.auctions import AuctionModel
from rosbid.cli import main
from rosbid.report import SWEEP_HEADER, TRAJ_HEADER, TRIALS_HEADER, _fmt


@pytest.fixture(autouse=True)
def clean_seed_env(monkeypatch):
    monkeypatch.delenv("ROSBID_SEED", raising=False)


def write_config(tmp_path, body, name="exp.toml"):
    path = tmp_path / name
    path.write_text(body)
    return str(path)


BASIC = (
    'policy = "approx_ros"\n'
    "horizons = [15, 30]\n"
    "trials = 4\n"
    "seed = 13\n"
    'oracle = "lp"\n'
    "\n"
    "[distribution]\n"
    'kind = "uniform_second_price"\n'
)


def read_artifacts(out_dir):
    """Bytes of every delimited file, keyed by name."""
    return {p.name: p.read_bytes()
            for p in sorted(out_dir.iterdir())
            if p.suffix in (".csv", ".json")}


class TestHeaders:
    def test_frozen_column_orders(self):
        assert TRIALS_HEADER == ("trial,seed,T,policy,reward,opt_value,regret,"
                                 "ros_slack,total_spend,K,max_mu,stopping_time")
        assert TRAJ_HEADER == "t,v,bid,x,p,g,g_prime,lambda,mu,budget_remaining"
        assert SWEEP_HEADER == "T,mean_regret,std_regret,mean_violation,max_violation,slope"

    def test_float_formatting_round_trips(self):
        assert _fmt(None) == ""
        assert _fmt(0.1) == "0.1"
        assert _fmt(3) == "3"
        for x in (1e-300, 2.0 / 3.0, 1.0, 12345.6789e12):
            assert float(_fmt(x)) == x


class TestRunCommand:
    def test_full_run(self, tmp_path, capsys):
        cfg = write_config(tmp_path, BASIC)
        out = tmp_path / "results"
        assert main(["run", "--config", cfg, "--out", str(out), "--threads", "1"]) == 0

        stdout = capsys.readouterr().out
        assert "policy approx_ros" in stdout
        assert "T=15" in stdout and "T=30" in stdout

        assert (out / "summary.json").is_file()
        assert (out / "trials_T15.csv").is_file()
        assert (out / "trials_T30.csv").is_file()
        assert (out / "reward_hist_T15.png").is_file()
        assert (out / "reward_hist_T30.png").is_file()
        assert not (out / "sweep.csv").exists()

        summary = json.loads((out / "summary.json").read_text())
        assert summary["version"] == rosbid.__version__
        assert summary["master_seed"] == 13
        assert len(summary["config_hash"]) == 64
        assert summary["config"]["policy"] == "approx_ros"
        assert [h["horizon"] for h in summary["horizons"]] == [15, 30]
        for h in summary["horizons"]:
            assert h["trials"] == 4
            assert h["oracle_method"] == "lp"

    def test_trials_csv_contents(self, tmp_path):
        cfg = write_config(tmp_path, BASIC)
        out = tmp_path / "results"
        main(["run", "--config", cfg, "--out", str(out), "--threads", "1"])
        lines = (out / "trials_T30.csv").read_text().splitlines()
        assert lines[0] == TRIALS_HEADER
        assert len(lines) == 5
        for i, line in enumerate(lines[1:]):
            cells = line.split(",")
            assert cells[0] == str(i)
            assert cells[2] == "30"
            assert cells[3] == "approx_ros"
            # numeric cells round-trip exactly through repr
            for cell in cells[4:9]:
                assert repr(float(cell)) == cell
            assert cells[9] == "" and cells[10] == "" and cells[11] == ""

    def test_reruns_are_byte_identical(self, tmp_path):
        cfg = write_config(tmp_path, BASIC)
        out = tmp_path / "results"
        main(["run", "--config", cfg, "--out", str(out), "--threads", "1"])
        first = read_artifacts(out)
        main(["run", "--config", cfg, "--out", str(out), "--threads", "1"])
        assert read_artifacts(out) == first

    def test_worker_count_does_not_change_output(self, tmp_path):
        cfg = write_config(tmp_path, BASIC)
        out = tmp_path / "results"
        main(["run", "--config", cfg, "--out", str(out), "--threads", "1"])
        serial = read_artifacts(out)
        main(["run", "--config", cfg, "--out", str(out), "--threads", "2"])
        assert read_artifacts(out) == serial

    def test_hash_independent_of_out_dir(self, tmp_path):
        cfg = write_config(tmp_path, BASIC)
        hashes = []
        for name in ("a", "b"):
            out = tmp_path / name
            main(["run", "--config", cfg, "--out", str(out), "--threads", "1"])
            hashes.append(json.loads((out / "summary.json").read_text())["config_hash"])
        assert hashes[0] == hashes[1]

    def test_env_seed_override(self, tmp_path, monkeypatch):
        cfg = write_config(tmp_path, BASIC)
        out = tmp_path / "results"
        monkeypatch.setenv("ROSBID_SEED", "99")
        assert main(["run", "--config", cfg, "--out", str(out), "--threads", "1"]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["master_seed"] == 99
        assert summary["config"]["seed"] == 99

    def test_trajectory_emission(self, tmp_path):
        cfg = write_config(tmp_path, (
            'policy = "approx_ros"\n'
            "horizons = [15]\n"
            "trials = 2\n"
            "seed = 3\n"
            'oracle = "exact"\n'
            "emit_trajectories = true\n"
            "\n"
            "[distribution]\n"
            'kind = "uniform_second_price"\n'))
        out = tmp_path / "results"
        assert main(["run", "--config", cfg, "--out", str(out), "--threads", "1"]) == 0
        for trial in (0, 1):
            lines = (out / f"traj_trial{trial}_T15.csv").read_text().splitlines()
            assert lines[0] == TRAJ_HEADER
            assert len(lines) == 16
            assert lines[1].split(",")[0] == "1"
        assert (out / "traj_trial0_T15.png").is_file()


class TestSweepCommand:
    def test_sweep_artifacts(self, tmp_path, capsys):
        cfg = write_config(tmp_path, BASIC)
        out = tmp_path / "sweep"
        assert main(["sweep", "--config", cfg, "--out", str(out), "--threads", "1"]) == 0

        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[0] == SWEEP_HEADER
        assert len(lines) == 3
        slopes = {line.split(",")[-1] for line in lines[1:]}
        assert len(slopes) == 1
        slope_cell = slopes.pop()
        assert (out / "violation_vs_T.png").is_file()
        if slope_cell:
            float(slope_cell)
            assert (out / "regret_vs_T.png").is_file()
            assert "fitted log-log regret slope" in capsys.readouterr().out

    def test_single_horizon_sweep_has_no_slope(self, tmp_path):
        cfg = write_config(tmp_path, (
            'policy = "approx_ros"\n'
            "horizons = [25]\n"
            "trials = 3\n"
            "seed = 1\n"
            'oracle = "lp"\n'
            "\n"
            "[distribution]\n"
            'kind = "uniform_second_price"\n'))
        out = tmp_path / "sweep"
        assert main(["sweep", "--config", cfg, "--out", str(out), "--threads", "1"]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["regret_slope"] is None
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[1].endswith(",")


class TestExitCodes:
    def test_config_errors_exit_one(self, tmp_path, capsys):
        bad_configs = [
            # budgeted policy without rho
            'policy = "strict_both"\nhorizons = [10]\ntrials = 1\nseed = 0\n'
            '[distribution]\nkind = "uniform_second_price"\n',
            # zero trials
            'policy = "approx_ros"\nhorizons = [10]\ntrials = 0\nseed = 0\n'
            '[distribution]\nkind = "uniform_second_price"\n',
            # descending horizons
            'policy = "approx_ros"\nhorizons = [20, 10]\ntrials = 1\nseed = 0\n'
            '[distribution]\nkind = "uniform_second_price"\n',
            # misspelled key
            'polcy = "approx_ros"\nhorizons = [10]\ntrials = 1\nseed = 0\n'
            '[distribution]\nkind = "uniform_second_price"\n',
            # broken TOML syntax
            "policy = [unclosed\n",
        ]
        for i, body in enumerate(bad_configs):
            cfg = write_config(tmp_path, body, name=f"bad{i}.toml")
            assert main(["run", "--config", cfg]) == 1
            assert capsys.readouterr().err.startswith("config error:")

    def test_missing_config_file_exits_one(self, tmp_path, capsys):
        assert main(["run", "--config", str(tmp_path / "absent.toml")]) == 1
        assert "not found" in capsys.readouterr().err

    def test_runtime_error_exits_two(self, tmp_path, capsys):
        cfg = write_config(tmp_path, BASIC)
        blocked = tmp_path / "blocked"
        blocked.write_text("in the way\n")
        assert main(["run", "--config", cfg, "--out", str(blocked), "--threads", "1"]) == 2
        assert capsys.readouterr().err.startswith("error: FileExistsError")

    def test_bad_thread_count_exits_one(self, tmp_path, capsys):
        cfg = write_config(tmp_path, BASIC)
        assert main(["run", "--config", cfg, "--threads", "0",
                     "--out", str(tmp_path / "x")]) == 1
        assert "--threads" in capsys.readouterr().err


class TestCheckCommand:
    def test_single_suite_passes(self, capsys):
        assert main(["check", "--suite", "lambda"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert len(out) == 1
        assert out[0].startswith("PASS lambda:")

    def test_broken_model_fails_suite(self, capsys, monkeypatch):
        class FirstPriceLike(AuctionModel):
            """Pays the full bid instead of the threshold price."""
            __slots__ = ()

            def allocation(self, bid):
                return min(1.0, max(0.0, bid))

            def payment(self, bid):
                return bid * self.allocation(bid)

            def integration_breakpoints(self):
                return (1.0,)

        monkeypatch.setattr(checks, "EXTRA_TRUTHFULNESS_MODELS", [FirstPriceLike()])
        assert main(["check", "--suite", "truthfulness"]) == 3
        out = capsys.readouterr().out
        assert out.startswith("FAIL truthfulness:")
        assert "FirstPriceLike" in out


class TestVersionFlag:
    def test_version_prints_and_exits(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert rosbid.__version__ in capsys.readouterr().out
