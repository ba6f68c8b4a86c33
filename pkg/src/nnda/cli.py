"""Command-line pipeline: ``nnda {truth,obs,letkf,train,nn,report}``.

Each stage writes into ``<runs-root>/<manifest-hash[:16]>/<stage>/`` and
drops a ``.done`` marker; re-running a finished stage is a no-op unless
``--force`` is given. Failures print one ``key=value`` line on stderr:

    nnda-error code=2 kind=missing-prerequisite stage=train path=runs/ab12.../letkf/.done
"""

from __future__ import annotations

import argparse
import logging
import os
import shutil
import sys
from pathlib import Path

import numpy as np

from . import harness
from .config import ExperimentManifest, dump_config, load_config, manifest_hash
from .dynamics import (read_snapshot, read_snapshot_series, write_snapshot,
                       write_snapshot_series, write_states_csv)
from .emulator import load_emulator, save_emulator
from .errors import ConfigurationError, NndaError
from .letkf import Ensemble
from .observations import (ObservationSet, read_network_csv, read_observations_csv,
                           write_network_csv, write_observations_csv)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_MISSING = 2
EXIT_INVALID = 3

STAGES = ("truth", "obs", "letkf", "train", "nn", "report")
DONE = ".done"

log = logging.getLogger("nnda")


class StageError(Exception):
    def __init__(self, code, kind, **fields):
        self.code = code
        self.kind = kind
        self.fields = fields
        super().__init__(kind)

    def line(self):
        extra = " ".join(f"{k}={v}" for k, v in self.fields.items())
        return f"nnda-error code={self.code} kind={self.kind} {extra}".rstrip()


class Run:
    """Paths and bookkeeping for one manifest's run directory."""

    def __init__(self, root, manifest: ExperimentManifest, threads: int, force: bool):
        self.manifest = manifest
        self.hash = manifest_hash(manifest)
        self.dir = Path(root) / self.hash[:16]
        self.threads = threads
        self.force = force

    def stage_dir(self, stage) -> Path:
        return self.dir / stage

    def is_done(self, stage) -> bool:
        marker = self.stage_dir(stage) / DONE
        return marker.exists() and marker.read_text().strip() == self.hash

    def require(self, stage, current):
        if not self.is_done(stage):
            raise StageError(EXIT_MISSING, "missing-prerequisite", stage=current,
                             path=self.stage_dir(stage) / DONE)

    def begin(self, stage) -> Path | None:
        """Prepare a clean stage directory, or return None when already complete."""
        if self.is_done(stage) and not self.force:
            print(f"nnda: {stage} already complete in {self.stage_dir(stage)} (use --force to redo)")
            return None
        d = self.stage_dir(stage)
        if d.exists():
            shutil.rmtree(d)
        d.mkdir(parents=True)
        self.dir.mkdir(parents=True, exist_ok=True)
        (self.dir / "manifest.yaml").write_text(dump_config(self.manifest))
        (self.dir / "manifest.sha256").write_text(self.hash + "\n")
        return d

    def finish(self, stage):
        (self.stage_dir(stage) / DONE).write_text(self.hash + "\n")
        print(f"nnda: {stage} written to {self.stage_dir(stage)}")

    # loaders shared by later stages

    def load_truth(self):
        d = self.stage_dir("truth")
        files = sorted(d.glob("state_*.bin"))
        return [read_snapshot(f) for f in files]

    def load_obs(self):
        d = self.stage_dir("obs")
        net = read_network_csv(d / "network.csv")
        by_cycle = read_observations_csv(d / "observations.csv", net.noise_std, net.identifier)
        total = self.manifest.total_cycles
        return net, [by_cycle.get(c) or _empty(c, net) for c in range(total)]


def _empty(cycle, net):
    return ObservationSet(cycle, np.zeros(0, np.int64), np.zeros(0), net.noise_std, net.identifier)


def cmd_truth(run: Run):
    d = run.begin("truth")
    if d is None:
        return
    truth = harness.run_truth(run.manifest)
    for s in truth:
        write_snapshot(d / f"state_{s.time_index:06d}.bin", s)
    write_states_csv(d / "truth.csv", truth)
    run.finish("truth")


def cmd_obs(run: Run):
    run.require("truth", "obs")
    d = run.begin("obs")
    if d is None:
        return
    truth = run.load_truth()
    net = harness.build_experiment_network(run.manifest)
    write_network_csv(d / "network.csv", net)
    write_observations_csv(d / "observations.csv", harness.generate_all_observations(run.manifest, truth, net))
    run.finish("obs")


def cmd_letkf(run: Run):
    run.require("truth", "letkf")
    run.require("obs", "letkf")
    d = run.begin("letkf")
    if d is None:
        return
    truth = run.load_truth()
    _, obs = run.load_obs()
    archive = harness.run_letkf_period(run.manifest, truth, obs, workers=run.threads,
                                       clim_std=harness.climatological_std(truth))
    write_snapshot_series(d / "forecast_means.bin", archive.forecast_means)
    write_snapshot_series(d / "analysis_means.bin", archive.analysis_means)
    lines = ["cycle,rmse_analysis,rmse_forecast"]
    for c, (ra, rf) in enumerate(zip(archive.analysis_rmse, archive.forecast_rmse)):
        lines.append(f"{c},{ra!r},{rf!r}")
    (d / "rmse.csv").write_text("\n".join(lines) + "\n")
    final = d / "final"
    final.mkdir()
    ens = archive.final.analysis_ensemble
    for j in range(ens.k):
        write_snapshot(final / f"member_{j:03d}.bin", ens.member(j))
    write_snapshot(final / "mean.bin", archive.final.analysis_mean)
    write_snapshot(final / "forecast_mean.bin", archive.final.forecast_mean)
    run.finish("letkf")


def _load_archive(run: Run):
    d = run.stage_dir("letkf")
    fm = read_snapshot_series(d / "forecast_means.bin")
    am = read_snapshot_series(d / "analysis_means.bin")
    members = [read_snapshot(f) for f in sorted((d / "final").glob("member_*.bin"))]
    return fm, am, Ensemble.from_states(members)


def cmd_train(run: Run):
    run.require("letkf", "train")
    d = run.begin("train")
    if d is None:
        return
    fm, am, _ = _load_archive(run)
    _, obs = run.load_obs()
    archive = harness.LetkfArchive(forecast_means=fm, analysis_means=am, observations=obs[:len(fm)])
    emu = harness.train_experiment_emulator(run.manifest, archive, workers=run.threads)
    save_emulator(d, emu)
    run.finish("train")


def cmd_nn(run: Run):
    for stage in ("truth", "obs", "letkf", "train"):
        run.require(stage, "nn")
    d = run.begin("nn")
    if d is None:
        return
    truth = run.load_truth()
    _, obs = run.load_obs()
    _, am, ens = _load_archive(run)
    emu = load_emulator(run.stage_dir("train"))
    reports = harness.run_nn_period(run.manifest, emu, am[-1], truth, obs,
                                    ens if run.manifest.compare_letkf else None, workers=run.threads)
    harness.write_report_csv(d / "cycles.csv", reports)
    run.finish("nn")


def cmd_report(run: Run):
    run.require("nn", "report")
    d = run.begin("report")
    if d is None:
        return
    reports = harness.read_report_csv(run.stage_dir("nn") / "cycles.csv")
    harness.write_report_csv(d / "cycles.csv", reports)
    (d / "summary.txt").write_text(harness.format_summary(harness.timing_report(reports)))
    run.finish("report")


COMMANDS = {"truth": cmd_truth, "obs": cmd_obs, "letkf": cmd_letkf, "train": cmd_train,
            "nn": cmd_nn, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML experiment config")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker cap")
    common.add_argument("--force", action="store_true", help="redo stages that are already complete")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="K=V",
                        help="override a config value, e.g. --set letkf.inflation=1.1")
    common.add_argument("--runs-root", type=Path, default=Path("runs"), help="parent of run directories")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="nnda", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES:
        sub.add_parser(name, parents=[common], help=f"run the {name} stage")
    sub.add_parser("all", parents=[common], help="run every stage in order")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.seed is not None and args.seed < 0:
            raise StageError(EXIT_INVALID, "invalid-config", key="seed", constraint=">=0")
        if args.threads < 1:
            raise StageError(EXIT_INVALID, "invalid-config", key="threads", constraint=">=1")
        try:
            manifest = load_config(args.config, args.overrides, args.seed)
        except ConfigurationError as exc:
            raise StageError(EXIT_INVALID, "invalid-config",
                             detail=str(exc).replace(" ", "_")) from exc
        run = Run(args.runs_root, manifest, args.threads, args.force)
        stages = STAGES if args.command == "all" else (args.command,)
        for stage in stages:
            COMMANDS[stage](run)
    except StageError as exc:
        print(exc.line(), file=sys.stderr)
        return exc.code
    except NndaError as exc:
        print(f"nnda-error code={EXIT_FAILURE} kind={type(exc).__name__} detail={str(exc).replace(' ', '_')}",
              file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
