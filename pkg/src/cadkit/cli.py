"""``cadkit <pipeline> --config <file> [--out dir]``.

Exit codes: 0 when every check passes, 2 when a check fails, 1 on an error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .harness import PIPELINES, ConfigError, ExperimentConfig, StageError, emit_report, run_pipeline


@click.command(context_settings={"help_option_names": ["-h", "--help"]})
@click.argument("pipeline", type=click.Choice(PIPELINES))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="JSON experiment config.")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")
@click.option("--pitch", type=float, default=None, help="Solver grid pitch h.")
@click.option("--walks", type=int, default=None, help="Walk-on-spheres sample count.")
@click.option("--seed", type=int, default=None)
@click.option("--q", type=float, default=None, help="Reverse-Hölder exponent.")
@click.option("--c0", type=float, default=None, help="Exterior corkscrew constant.")
@click.option("--epsilon", type=float, default=None)
@click.option("--depth", type=int, default=None, help="Dyadic grid depth.")
@click.option("--format", "formats", multiple=True, type=click.Choice(["csv", "json", "svg"]), default=("csv", "json", "svg"))
@click.option("--timings", is_flag=True, help="Also write per-check run times to timings.json.")
def main(pipeline, config_path, out, pitch, walks, seed, q, c0, epsilon, depth, formats, timings):
    """Run a named pipeline and write its report."""
    try:
        data = json.loads(Path(config_path).read_text()) if config_path else {}
        data["pipeline"] = pipeline
        overrides = {"pitch": pitch, "walks": walks, "seed": seed, "q": q, "c0": c0, "epsilon": epsilon, "depth": depth}
        data.update({k: v for k, v in overrides.items() if v is not None})
        if out is not None:
            data["out"] = out
        cfg = ExperimentConfig.from_dict(data)
        report = run_pipeline(cfg)
        emit_report(report, cfg.out, formats, timings)
    except (ConfigError, StageError, OSError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    for r in report.records:
        click.echo(f"{'PASS' if r.passed else 'FAIL'} {r.criterion} {r.check}")
    sys.exit(0 if report.passed else 2)


if __name__ == "__main__":  # pragma: no cover
    main()
