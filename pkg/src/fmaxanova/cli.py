"""Command-line interface: ``fmaxanova {test,simulate,nullpdf,ecg}``.

The exit status reports errors only, never test decisions.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import boot, ecg, simstudy
from .anova import DegenerateStatisticError
from .funcdata import FunctionalDataError, load_sample, save_sample
from .gauss import DEFAULT_SEED, RngStream

SEED_ENV = "FMAXANOVA_SEED"


def _default_seed() -> int:
    return int(os.environ.get(SEED_ENV, DEFAULT_SEED))


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.replace("(", "").replace(")", "").split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _write(text: str, path: str | None) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# test


def cmd_test(args) -> int:
    sample = load_sample(args.sample, args.format)
    cfg = boot.BootstrapConfig(
        B=args.B,
        method=args.method,
        seed=args.seed,
        alpha=args.alpha,
        resample_within_group=args.within_group,
        threads=args.threads,
    )
    report = boot.calibrate(sample, args.stat, cfg)
    _write(report.to_json() + "\n", args.output)
    if args.replicates:
        Path(args.replicates).write_text(report.replicates_csv(), encoding="utf-8")
    return 0


# ---------------------------------------------------------------------------
# simulate


_SIM_FLAGS = ("k", "n", "M", "q", "a", "rho", "delta", "dist", "N", "B", "alpha", "eig_shift")


def _sim_config(args, **overrides) -> simstudy.SimConfig:
    d = {}
    if getattr(args, "config", None):
        d.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
    for name in _SIM_FLAGS:
        v = getattr(args, name, None)
        if v is not None:
            d[name] = v
    if "n" in d and "k" not in d:
        d["k"] = len(d["n"])
    d.setdefault("seed", args.seed)
    d.update(overrides)
    return simstudy.SimConfig.from_dict(d)


def _add_sim_flags(p) -> None:
    p.add_argument("--config", help="SimConfig JSON file (flags override its fields)")
    p.add_argument("--k", type=int)
    p.add_argument("--n", type=_int_list, help="group sizes, e.g. 20,30,30")
    p.add_argument("--M", type=int)
    p.add_argument("--q", type=int)
    p.add_argument("--a", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--dist", choices=("gauss", "t4_scaled"))
    p.add_argument("--N", type=int)
    p.add_argument("--B", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--eig-shift", dest="eig_shift", type=int)


def cmd_simulate(args) -> int:
    if args.table1_subset:
        cfgs = [_sim_config(args, **cell) for cell in simstudy.TABLE1_SUBSET]
        if args.N is not None:
            cfgs = [simstudy.SimConfig.from_dict({**c.to_dict(), "N": args.N}) for c in cfgs]
        if args.B is not None:
            cfgs = [simstudy.SimConfig.from_dict({**c.to_dict(), "B": args.B}) for c in cfgs]
    else:
        cfgs = [_sim_config(args)]
    results = []
    sys.stdout.write("\t".join(simstudy.TSV_COLUMNS) + "\n")
    for cfg in cfgs:
        res = simstudy.run_cell(cfg, threads=args.threads)
        results.append(res)
        sys.stdout.write(res.tsv_row() + "\n")
        sys.stdout.flush()
    if args.tsv:
        path = Path(args.tsv)
        new = not path.exists() or path.stat().st_size == 0
        with path.open("a", encoding="utf-8") as fh:
            if new:
                fh.write("\t".join(simstudy.TSV_COLUMNS) + "\n")
            for res in results:
                fh.write(res.tsv_row() + "\n")
    if args.output:
        doc = [r.to_dict() for r in results]
        Path(args.output).write_text(json.dumps(doc if len(doc) > 1 else doc[0], indent=2) + "\n")
    return 0


# ---------------------------------------------------------------------------
# nullpdf


def svg_lines(x, y, width: int = 480, height: int = 320, pad: int = 30) -> str:
    """Minimal SVG polyline plot of ``y`` against ``x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xs = pad + (x - x.min()) / (np.ptp(x) or 1.0) * (width - 2 * pad)
    ys = height - pad - (y - y.min()) / (np.ptp(y) or 1.0) * (height - 2 * pad)
    pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(xs, ys))
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">\n'
        f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
        'fill="none" stroke="#999"/>\n'
        f'<polyline points="{pts}" fill="none" stroke="black" stroke-width="1.5"/>\n'
        f'<text x="{pad}" y="{height - 8}" font-size="11">{x.min():.3g}</text>\n'
        f'<text x="{width - pad}" y="{height - 8}" font-size="11" text-anchor="end">{x.max():.3g}</text>\n'
        "</svg>\n"
    )


def cmd_nullpdf(args) -> int:
    if args.sample:
        sample = load_sample(args.sample, args.format)
        B = args.B or 10000
    else:
        cfg = _sim_config(args)
        sample = simstudy.generate_sample(cfg, RngStream(cfg.seed, 0).substream(0))
        B = cfg.B if args.B is None else args.B
    reps = boot.npb_replicates(sample, B, args.seed, threads=args.threads)["fmax"]
    x = simstudy.kde_support(reps, num=args.points)
    dens = simstudy.kde_pdf(reps, x)
    text = "x,density\n" + "".join(f"{a!r},{b!r}\n" for a, b in zip(x.tolist(), dens.tolist()))
    _write(text, args.output)
    if args.svg:
        Path(args.svg).write_text(svg_lines(x, dens), encoding="utf-8")
    return 0


# ---------------------------------------------------------------------------
# ecg


def read_manifest(path) -> list:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        try:
            sid, group, rec = row["subject_id"].strip(), row["group"].strip(), row["path"].strip()
        except (KeyError, AttributeError):
            raise FunctionalDataError("manifest needs columns subject_id,group,path") from None
        rec_path = Path(rec)
        if not rec_path.is_absolute():
            rec_path = path.parent / rec_path
        out.append((sid, group, rec_path))
    return out


def cmd_ecg(args) -> int:
    entries = read_manifest(args.manifest)
    out = Path(args.output) if args.output else None
    subj_dir = Path(args.subjects_dir) if args.subjects_dir else (
        out.with_name(out.stem + "_subjects") if out else None
    )
    if subj_dir:
        subj_dir.mkdir(parents=True, exist_ok=True)

    def run(entry):
        sid, group, rec_path = entry
        try:
            rec = ecg.read_recording_csv(rec_path, fs=args.fs, subject_id=sid)
            wf = ecg.process_recording(rec, L=args.L, apply_lowpass=args.lowpass)
            return sid, group, wf, None
        except (OSError, ValueError) as exc:
            return sid, group, None, exc

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(run, entries))
    else:
        results = [run(e) for e in entries]

    failed = 0
    ok = []
    for sid, group, wf, err in results:
        if err is not None:
            failed += 1
            print(f"error: subject {sid}: {err}", file=sys.stderr)
            continue
        ok.append((wf, group))
        if subj_dir:
            (subj_dir / f"{sid}.json").write_text(wf.to_json(), encoding="utf-8")
    try:
        sample = ecg.build_group_samples(ok, args.feature)
    except ValueError as exc:
        print(f"error: cannot assemble sample: {exc}", file=sys.stderr)
        return 1
    if out:
        save_sample(sample, out, "csv")
    else:
        from .funcdata import sample_to_text

        sys.stdout.write(sample_to_text(sample, "csv"))
    return 1 if failed else 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=_default_seed(),
                        help=f"random seed (default: ${SEED_ENV} or {DEFAULT_SEED})")
    common.add_argument("--threads", type=_positive_int, default=1, help="worker threads")
    common.add_argument("--output", "--out", dest="output", help="output file (default: stdout)")

    parser = argparse.ArgumentParser(prog="fmaxanova", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", parents=[common], help="bootstrap test on a sample file")
    p.add_argument("sample")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--stat", choices=boot.STATISTICS, default="fmax")
    p.add_argument("--method", choices=boot.METHODS, default="npb")
    p.add_argument("--B", type=_positive_int, default=10000)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--within-group", action="store_true",
                   help="resample residuals within each group instead of pooling")
    p.add_argument("--replicates", help="write bootstrap replicates as a one-column CSV")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("simulate", parents=[common], help="run simulation cells")
    _add_sim_flags(p)
    p.add_argument("--table1-subset", action="store_true", help="run the acceptance cells")
    p.add_argument("--tsv", help="append result rows to this tab-separated table")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("nullpdf", parents=[common], help="KDE of the NPB F_max null distribution")
    p.add_argument("sample", nargs="?", help="sample file; omit to simulate one from the cell flags")
    p.add_argument("--format", choices=("csv", "json"))
    _add_sim_flags(p)
    p.add_argument("--points", type=_positive_int, default=512)
    p.add_argument("--svg", help="also write a line plot")
    p.set_defaults(func=cmd_nullpdf)

    p = sub.add_parser("ecg", parents=[common], help="ECG manifest to functional sample")
    p.add_argument("manifest", help="CSV with columns subject_id,group,path")
    p.add_argument("--feature", choices=ecg.FEATURES, default="cumulative")
    p.add_argument("--fs", type=float, default=500.0)
    p.add_argument("--L", type=_positive_int, help="beats per subject (default: all)")
    p.add_argument("--lowpass", action="store_true", help="apply the 60 Hz low-pass first")
    p.add_argument("--subjects-dir", help="directory for per-subject JSON")
    p.set_defaults(func=cmd_ecg)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FunctionalDataError, DegenerateStatisticError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
