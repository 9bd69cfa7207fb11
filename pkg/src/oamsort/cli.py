"""Command-line front end.

Verbs: ``phantom`` (write a potential map), ``discriminate`` (single-pair
report), ``sort`` (transform-chain images), ``mc`` (dose-limited Monte
Carlo), ``table`` (report rows for every configured pair).  Exit codes: 0
success, 2 usage or configuration error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from ._io import atomic_write_text, save_grayscale_png
from .decompose import oam_decompose, default_radial_grid
from .discriminate import EQUAL_PRIORS, Priors, report_csv, report_to_json, scheme_to_json
from .errors import DomainError, FormatError
from .fields import (
    GridSpec,
    SpecimenModel,
    electron_params,
    load_potential_map,
    make_phantom,
    plane_wave_probe,
    save_potential_map,
)
from .montecarlo import DetectionDistribution, ExperimentConfig, classify, sample_detection
from .pipeline import (
    DEFAULT_GRID,
    DEFAULT_THRESHOLDS,
    DEFAULT_VOLTAGE_KV,
    analyze_pair,
    phantom_presets,
)
from .sorter import SorterConfig, log_polar_unwrap, separate_channels

_PHANTOM_KEYS = {"n_fold", "ring_radius", "blob_sigma", "packing", "peak_potential", "azimuth"}
_SPECIMEN_KEYS = {"phantom", "map"}
_GRID_KEYS = {"n", "fov"}
_DECOMP_KEYS = {"m_max", "n_r"}
_TOP_KEYS = {
    "voltage_kv",
    "grid",
    "decomposition",
    "priors",
    "thresholds",
    "doses",
    "trials",
    "seed",
    "specimens",
    "pairs",
}


@dataclass
class RunConfig:
    """Validated run configuration (see ``load_config`` for the schema)."""

    voltage_kv: float = DEFAULT_VOLTAGE_KV
    grid: GridSpec = DEFAULT_GRID
    m_max: int = 32
    n_r: int = 256
    priors: Priors = EQUAL_PRIORS
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    doses: tuple[float, ...] = (2.0, 0.2)
    trials: int = 400
    seed: int = 20260810
    specimens: dict = field(default_factory=dict)
    pairs: tuple[tuple[str, str], ...] = ()


def _reject_unknown(mapping: dict, allowed: set, where: str) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise FormatError(f"unknown key(s) {sorted(unknown)} in {where}")


def _build_specimen(name: str, entry: dict, grid: GridSpec, base_dir: str) -> SpecimenModel:
    if not isinstance(entry, dict):
        raise FormatError(f"specimen {name!r} must be an object")
    _reject_unknown(entry, _SPECIMEN_KEYS, f"specimen {name!r}")
    if ("phantom" in entry) == ("map" in entry):
        raise FormatError(f"specimen {name!r} needs exactly one of 'phantom' or 'map'")
    if "map" in entry:
        path = entry["map"]
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        specimen = load_potential_map(path)
        if specimen.grid != grid:
            raise FormatError(
                f"specimen {name!r}: map grid {specimen.grid} differs from configured {grid}"
            )
        return specimen
    params = dict(entry["phantom"])
    _reject_unknown(params, _PHANTOM_KEYS, f"specimen {name!r} phantom")
    if "n_fold" not in params:
        raise FormatError(f"specimen {name!r} phantom needs 'n_fold'")
    return make_phantom(grid, **params)


def load_config(path: str | None) -> RunConfig:
    """Load and validate a JSON run configuration.

    Schema (all keys optional; unknown keys are rejected)::

        {
          "voltage_kv": 300.0,
          "grid": {"n": 512, "fov": 180.0},
          "decomposition": {"m_max": 32, "n_r": 256},
          "priors": [0.5, 0.5],
          "thresholds": [0.9, 0.99],
          "doses": [2.0, 0.2],
          "trials": 400,
          "seed": 20260810,
          "specimens": {"pa": {"phantom": {"n_fold": 7, ...}},
                        "pb": {"map": "pb.pmap"}},
          "pairs": [["pa", "pb"], ...]
        }

    Without ``specimens`` the three bundled phantoms pa/pb/pc are used;
    without ``pairs`` every unordered pair of specimens is analyzed.
    """
    doc: dict = {}
    base_dir = "."
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise FormatError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise FormatError(f"config {path} is not valid JSON: {exc}") from exc
        base_dir = os.path.dirname(os.path.abspath(path))
    if not isinstance(doc, dict):
        raise FormatError("config root must be a JSON object")
    _reject_unknown(doc, _TOP_KEYS, "config")

    grid_doc = doc.get("grid", {})
    _reject_unknown(grid_doc, _GRID_KEYS, "config.grid")
    grid = GridSpec(int(grid_doc.get("n", 512)), float(grid_doc.get("fov", 180.0)))

    dec_doc = doc.get("decomposition", {})
    _reject_unknown(dec_doc, _DECOMP_KEYS, "config.decomposition")

    priors_doc = doc.get("priors", [0.5, 0.5])
    if not (isinstance(priors_doc, list) and len(priors_doc) == 2):
        raise FormatError("config.priors must be a two-element list")

    cfg = RunConfig(
        voltage_kv=float(doc.get("voltage_kv", DEFAULT_VOLTAGE_KV)),
        grid=grid,
        m_max=int(dec_doc.get("m_max", 32)),
        n_r=int(dec_doc.get("n_r", 256)),
        priors=Priors(float(priors_doc[0]), float(priors_doc[1])),
        thresholds=tuple(float(x) for x in doc.get("thresholds", list(DEFAULT_THRESHOLDS))),
        doses=tuple(float(x) for x in doc.get("doses", [2.0, 0.2])),
        trials=int(doc.get("trials", 400)),
        seed=int(doc.get("seed", 20260810)),
    )
    if "specimens" in doc:
        cfg.specimens = {
            name: _build_specimen(name, entry, grid, base_dir)
            for name, entry in doc["specimens"].items()
        }
    else:
        cfg.specimens = phantom_presets(grid)
    if len(cfg.specimens) < 2:
        raise FormatError("config needs at least two specimens")

    if "pairs" in doc:
        pairs = []
        for pair in doc["pairs"]:
            if not (isinstance(pair, list) and len(pair) == 2):
                raise FormatError("each entry of config.pairs must be a two-element list")
            for name in pair:
                if name not in cfg.specimens:
                    raise FormatError(f"pair references unknown specimen {name!r}")
            pairs.append((pair[0], pair[1]))
        cfg.pairs = tuple(pairs)
    else:
        cfg.pairs = tuple(itertools.combinations(sorted(cfg.specimens), 2))
    return cfg


def _analyze(cfg: RunConfig, pair: tuple[str, str], probe=None):
    params = electron_params(cfg.voltage_kv)
    return analyze_pair(
        cfg.specimens[pair[0]],
        cfg.specimens[pair[1]],
        params=params,
        priors=cfg.priors,
        label=f"{pair[0]},{pair[1]}",
        probe=probe,
        m_max=cfg.m_max,
        n_r=cfg.n_r,
        thresholds=cfg.thresholds,
    )


def _array_csv(arr: np.ndarray) -> str:
    return "\n".join(",".join(f"{v:.17g}" for v in row) for row in np.atleast_2d(arr)) + "\n"


def cmd_phantom(args) -> int:
    grid = GridSpec(args.n, args.fov)
    specimen = make_phantom(
        grid,
        n_fold=args.nfold,
        ring_radius=args.ring,
        blob_sigma=args.sigma,
        packing=args.packing,
        peak_potential=args.peak,
        azimuth=args.azimuth,
    )
    save_potential_map(specimen, args.out)
    params = electron_params(args.voltage)
    print(f"wrote {args.out}")
    print(f"max phase modulation sigma*V = {params.sigma * specimen.potential.max():.6f} rad")
    return 0


def cmd_discriminate(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    os.makedirs(args.out, exist_ok=True)
    pairs = cfg.pairs if args.pair is None else (tuple(args.pair.split(",")),)
    reports = []
    for pair in pairs:
        if len(pair) != 2 or not all(name in cfg.specimens for name in pair):
            raise FormatError(f"--pair must name two configured specimens, got {pair}")
        analysis = _analyze(cfg, pair)
        reports.append(analysis.report)
        doc = report_to_json(analysis.report, scheme_to_json(analysis.scheme, analysis.regions))
        doc["phys_s0"] = analysis.phys_s0
        doc["phys_s1"] = analysis.phys_s1
        atomic_write_text(
            os.path.join(args.out, f"report_{pair[0]}_{pair[1]}.json"),
            json.dumps(doc, indent=1),
        )
    atomic_write_text(os.path.join(args.out, "report.csv"), report_csv(reports))
    print(report_csv(reports), end="")
    return 0


def cmd_sort(args) -> int:
    cfg = load_config(args.config)
    os.makedirs(args.out, exist_ok=True)
    pair = cfg.pairs[0]
    name = args.specimen or pair[0]
    if name not in cfg.specimens:
        raise FormatError(f"unknown specimen {name!r}")
    if name not in pair:
        pair = (name, next(other for other in cfg.specimens if other != name))
    analysis = _analyze(cfg, pair)
    field_ = analysis.field0 if name == pair[0] else analysis.field1
    image = analysis.image0 if name == pair[0] else analysis.image1

    lp = log_polar_unwrap(field_)
    channels = separate_channels(lp, m_max=cfg.m_max)
    channel_map = np.stack(
        [np.abs(channels[m]) ** 2 for m in range(-cfg.m_max, cfg.m_max + 1)], axis=1
    )

    panels = {
        "panel1_cartesian_phase": np.angle(field_.amplitudes),
        "panel2_logpolar_phase": np.angle(lp.values),
        "panel3_channel_intensity": channel_map,
        "panel4_detector": image.to_array(),
    }
    for stem, arr in panels.items():
        save_grayscale_png(arr, os.path.join(args.out, stem + ".png"))
        atomic_write_text(os.path.join(args.out, stem + ".csv"), _array_csv(arr))
    image.save_csv(os.path.join(args.out, "detector_cells.csv"))
    print(f"wrote 4 panels for specimen {name!r} to {args.out}")
    return 0


def cmd_mc(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    os.makedirs(args.out, exist_ok=True)
    pair = cfg.pairs[0]
    analysis = _analyze(cfg, pair)
    dists = (
        DetectionDistribution.from_detector_image(analysis.image0),
        DetectionDistribution.from_detector_image(analysis.image1),
    )
    summary = []
    for dose in cfg.doses:
        for truth in (0, 1):
            experiment = ExperimentConfig(
                dose=dose,
                area=cfg.grid.area,
                truth=truth,
                seed=cfg.seed,
                trials=cfg.trials,
            )
            hits = 0
            first = None
            for t in range(cfg.trials):
                hist = sample_detection(dists[truth], experiment, trial=t)
                decision, llr = classify(
                    hist, analysis.outcome0_cells, cfg.priors, analysis.phys_s0, analysis.phys_s1
                )
                hits += decision == truth
                if t == 0:
                    first = (hist, decision, llr)
            hist, decision, llr = first
            stem = f"hist_dose{dose:g}_truth{truth}"
            hist.save_csv(os.path.join(args.out, stem + ".csv"))
            layout = hist.counts.reshape(len(analysis.image0.ms), -1).T
            save_grayscale_png(layout, os.path.join(args.out, stem + ".png"))
            summary.append(
                {
                    "dose": dose,
                    "truth": truth,
                    "n": hist.n,
                    "decision": decision,
                    "llr": llr,
                    "trials": cfg.trials,
                    "empirical_success": hits / cfg.trials,
                }
            )
    atomic_write_text(os.path.join(args.out, "mc_summary.json"), json.dumps(summary, indent=1))
    for row in summary:
        print(
            f"dose {row['dose']:g} truth {row['truth']}: n={row['n']} "
            f"decision={row['decision']} success={row['empirical_success']:.4f}"
        )
    return 0


def cmd_table(args) -> int:
    cfg = load_config(args.config)
    os.makedirs(args.out, exist_ok=True)
    reports = []
    docs = []
    for pair in cfg.pairs:
        analysis = _analyze(cfg, pair)
        reports.append(analysis.report)
        docs.append(report_to_json(analysis.report))
    csv_text = report_csv(reports)
    atomic_write_text(os.path.join(args.out, "table.csv"), csv_text)
    atomic_write_text(os.path.join(args.out, "table.json"), json.dumps(docs, indent=1))
    print(csv_text, end="")
    return 0


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oamsort", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="write a PMAP1 potential map for a ring phantom")
    p.add_argument("--nfold", type=_positive_int, required=True, help="rotational symmetry order")
    p.add_argument("--ring", type=float, default=55.0, help="ring radius, A")
    p.add_argument("--sigma", type=float, default=6.0, help="blob width, A")
    p.add_argument("--packing", type=float, default=0.45, help="radial packing in (0, 1]")
    p.add_argument("--peak", type=float, default=380.0, help="peak potential, volt*A")
    p.add_argument("--azimuth", type=float, default=0.0, help="pattern rotation, rad")
    p.add_argument("--n", type=int, default=512, help="grid side, power of two")
    p.add_argument("--fov", type=float, default=180.0, help="field of view, A")
    p.add_argument("--voltage", type=float, default=DEFAULT_VOLTAGE_KV, help="beam voltage, kV")
    p.add_argument("--out", required=True, help="output map path")
    p.set_defaults(func=cmd_phantom)

    for name, func, extra in (
        ("discriminate", cmd_discriminate, "pair"),
        ("sort", cmd_sort, "specimen"),
        ("mc", cmd_mc, None),
        ("table", cmd_table, None),
    ):
        p = sub.add_parser(name, help=f"run the {name} workflow")
        p.add_argument("--config", default=None, help="JSON run configuration")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=_positive_int, default=1, help="worker threads")
        if extra == "pair":
            p.add_argument("--pair", default=None, help="comma-separated specimen pair")
        if extra == "specimen":
            p.add_argument("--specimen", default=None, help="specimen to visualize")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (DomainError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - runtime failures exit 1 by contract
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
