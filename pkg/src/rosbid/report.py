"""Result serialization: frozen-format CSVs, summary.json, and figures.

Column orders and headers are a stable interface; floats are written with
repr() so every value round-trips exactly and reruns of the same config
produce byte-identical CSV and JSON files.  Figures are rendered next to
the delimited output with the Agg backend; they are presentation only and
carry no data that is not already in the CSVs.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

from .config import ExperimentConfig
from .simulate import ExperimentReport, HorizonStats, TrialMetrics

TRIALS_HEADER = "trial,seed,T,policy,reward,opt_value,regret,ros_slack,total_spend,K,max_mu,stopping_time"
TRAJ_HEADER = "t,v,bid,x,p,g,g_prime,lambda,mu,budget_remaining"
SWEEP_HEADER = "T,mean_regret,std_regret,mean_violation,max_violation,slope"


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_lines(path: Path, lines: Sequence[str]) -> Path:
    with open(path, "w", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")
    return path


def write_trials_csv(out_dir: Path, horizon: int, metrics: Sequence[TrialMetrics]) -> Path:
    lines = [TRIALS_HEADER]
    for m in metrics:
        lines.append(",".join((
            str(m.trial_index), str(m.seed), str(m.horizon), m.policy,
            _fmt(m.reward), _fmt(m.opt_value), _fmt(m.regret),
            _fmt(m.ros_slack), _fmt(m.total_spend),
            _fmt(m.first_phase_length), _fmt(m.max_mu), _fmt(m.stopping_time),
        )))
    return _write_lines(out_dir / f"trials_T{horizon}.csv", lines)


def write_trajectory_csvs(out_dir: Path, horizon: int,
                          metrics: Sequence[TrialMetrics]) -> list[Path]:
    paths = []
    for m in metrics:
        if m.trajectory is None:
            continue
        lines = [TRAJ_HEADER]
        for o in m.trajectory:
            lines.append(",".join((
                str(o.t), _fmt(o.value), _fmt(o.bid), _fmt(o.allocation),
                _fmt(o.price), _fmt(o.g), _fmt(o.g_prime), _fmt(o.lam),
                _fmt(o.mu), _fmt(o.budget_remaining),
            )))
        paths.append(_write_lines(
            out_dir / f"traj_trial{m.trial_index}_T{horizon}.csv", lines))
    return paths


def write_sweep_csv(out_dir: Path, stats: Sequence[HorizonStats],
                    slope: Optional[float]) -> Path:
    lines = [SWEEP_HEADER]
    for hs in stats:
        lines.append(",".join((
            str(hs.horizon), _fmt(hs.mean_regret), _fmt(hs.std_regret),
            _fmt(hs.mean_violation), _fmt(hs.max_violation), _fmt(slope),
        )))
    return _write_lines(out_dir / "sweep.csv", lines)


def write_summary_json(out_dir: Path, config: ExperimentConfig,
                       report: ExperimentReport, version: str) -> Path:
    payload = {
        "version": version,
        "config_hash": config.config_hash(),
        "master_seed": config.seed,
        "config": config.to_dict(),
        "beta_estimate": report.beta_estimate,
        "beta_warning": report.beta_warning,
        "regret_slope": report.regret_slope,
        "horizons": [asdict(hs) for hs in report.horizon_stats],
    }
    path = out_dir / "summary.json"
    with open(path, "w", newline="\n") as fh:
        fh.write(json.dumps(payload, indent=2, sort_keys=True))
        fh.write("\n")
    return path


def render_run_figures(out_dir: Path, report: ExperimentReport) -> list[Path]:
    """Reward histograms per horizon plus, when trajectories were emitted,
    the dual/slack paths of the first recorded trial."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    for hs in report.horizon_stats:
        metrics = report.trial_metrics[hs.horizon]
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        rewards = [m.reward for m in metrics]
        ax.hist(rewards, bins=min(30, max(5, len(rewards) // 4)),
                color="tab:blue", alpha=0.7, label="reward")
        opts = [m.opt_value for m in metrics if m.opt_value is not None]
        if opts:
            ax.hist(opts, bins=min(30, max(5, len(opts) // 4)),
                    color="tab:orange", alpha=0.5, label="offline opt")
            ax.legend()
        ax.set_xlabel("total value won")
        ax.set_ylabel("trials")
        ax.set_title(f"T={hs.horizon}, {metrics[0].policy}")
        fig.tight_layout()
        path = out_dir / f"reward_hist_T{hs.horizon}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)

        traj = next((m for m in metrics if m.trajectory), None)
        if traj is not None:
            fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6.0, 5.0), sharex=True)
            ts = [o.t for o in traj.trajectory]
            ax1.plot(ts, [o.lam for o in traj.trajectory], lw=0.8)
            ax1.set_yscale("log")
            ax1.set_ylabel("lambda")
            running = 0.0
            slack = []
            for o in traj.trajectory:
                running += o.g
                slack.append(running)
            ax2.plot(ts, slack, lw=0.8, color="tab:green")
            ax2.axhline(0.0, color="gray", lw=0.5)
            ax2.set_ylabel("cumulative g")
            ax2.set_xlabel("round")
            fig.tight_layout()
            path = out_dir / f"traj_trial{traj.trial_index}_T{hs.horizon}.png"
            fig.savefig(path, dpi=120)
            plt.close(fig)
            paths.append(path)
    return paths


def render_sweep_figures(out_dir: Path, report: ExperimentReport) -> list[Path]:
    """Log-log regret growth (with the fitted slope) and violation sizes."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import numpy as np

    paths = []
    pts = [(hs.horizon, hs.mean_regret) for hs in report.horizon_stats
           if hs.mean_regret is not None and hs.mean_regret > 0.0]
    if len(pts) >= 2:
        ts = np.array([float(t) for t, _ in pts])
        rs = np.array([r for _, r in pts])
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        ax.loglog(ts, rs, "o-", label="mean regret")
        slope = report.regret_slope
        if slope is not None:
            coef = np.polyfit(np.log(ts), np.log(rs), 1)
            ax.loglog(ts, np.exp(coef[1]) * ts ** coef[0], "--",
                      label=f"fit: T^{slope:.3f}")
        ax.set_xlabel("horizon T")
        ax.set_ylabel("mean positive regret")
        ax.legend()
        fig.tight_layout()
        path = out_dir / "regret_vs_T.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ts = [hs.horizon for hs in report.horizon_stats]
    ax.plot(ts, [hs.mean_violation for hs in report.horizon_stats], "o-",
            label="mean violation")
    ax.plot(ts, [hs.max_violation for hs in report.horizon_stats], "s--",
            label="max violation")
    ax.set_xscale("log")
    ax.set_xlabel("horizon T")
    ax.set_ylabel("RoS violation")
    ax.legend()
    fig.tight_layout()
    path = out_dir / "violation_vs_T.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    paths.append(path)
    return paths


def write_all(out_dir: Path, config: ExperimentConfig, report: ExperimentReport,
              version: str, sweep: bool = False, figures: bool = True) -> list[Path]:
    """Write every artifact for one finished experiment; single writer,
    called after the parallel reduction."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [write_summary_json(out_dir, config, report, version)]
    for hs in report.horizon_stats:
        metrics = report.trial_metrics[hs.horizon]
        paths.append(write_trials_csv(out_dir, hs.horizon, metrics))
        paths.extend(write_trajectory_csvs(out_dir, hs.horizon, metrics))
    if sweep:
        paths.append(write_sweep_csv(out_dir, report.horizon_stats, report.regret_slope))
    if figures:
        paths.extend(render_run_figures(out_dir, report))
        if sweep:
            paths.extend(render_sweep_figures(out_dir, report))
    return paths
