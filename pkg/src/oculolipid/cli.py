"""Command-line entry point.

    oculolipid extract  --masks DIR --out DIR
    oculolipid analyze  --fundus CSV --lipids CSV --out DIR
    oculolipid report   --out DIR
    oculolipid simulate --out DIR [--seed N]
    oculolipid all      [--out DIR]        (bundled dataset unless paths given)

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

import argparse
import json
import logging
import os
import sys

import pandas as pd

from . import __version__
from .bundled import bundled_paths, split_tables
from .cohort import merge_cohort, parse_fundus_csv, parse_lipid_csv, read_cohort, write_cohort, write_table
from .errors import OculolipidError
from .masks import MaskLayout, extract_directory
from .morphometry import MorphometryConfig
from .pipeline import (
    AssociationNetwork,
    PlantedEffectSpec,
    build_manifest,
    build_network,
    default_lipid_names,
    lipid_retina_sweep,
    profile_demographics,
    read_associations,
    simulate_cohort,
    write_associations,
    write_json,
    write_skipped,
)
from .report import write_report

log = logging.getLogger("oculolipid")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

# key -> (type, default); flat key = value config file, flags win
DEFAULTS = {
    "masks": (str, None),
    "fundus": (str, None),
    "lipids": (str, None),
    "out": (str, "oculolipid_out"),
    "q": (float, 0.05),
    "r_min": (float, 0.1),
    "fdr_scope": (str, "global"),
    "ci_level": (float, 0.95),
    "min_degree": (int, 5),
    "top_k": (int, 20),
    "seed": (int, 0),
    "jobs": (int, None),
    "kde": (bool, False),
    "restrict_to_retained": (bool, False),
    "log10_lipids": (bool, False),
    "age_tolerance": (float, 1.0),
    # morphometry
    "min_segment_length_px": (float, 10.0),
    "gaussian_sigma_samples": (float, 2.0),
    "box_ladder_max_divisor": (int, 4),
    "width_scale_factor": (float, 1.0),
    "grisan_variant": (str, "normalized"),
    "hart_normalize": (bool, True),
    "mask_mode": (str, "pair"),
    "artery_labels": (str, "1"),
    "vein_labels": (str, "2"),
    "artery_channel": (int, 0),
    "vein_channel": (int, 2),
    # simulation
    "sim_n": (int, 2000),
    "sim_n_lipids": (int, 60),
    "sim_planted_feature": (str, "artery_average_width"),
    "sim_n_planted": (int, 10),
    "sim_planted_r": (float, 0.12),
    "sim_alternate_signs": (bool, True),
    "sim_missing_rate": (float, 0.0),
}
# keys that change where or how fast a run goes, not what it computes
_RUNTIME_KEYS = ("out", "jobs")
_MORPH_KEYS = ("min_segment_length_px", "gaussian_sigma_samples", "box_ladder_max_divisor",
               "width_scale_factor", "grisan_variant", "hart_normalize")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _coerce(key, raw):
    kind = DEFAULTS[key][0]
    if raw is None:
        return None
    if kind is bool:
        if isinstance(raw, bool):
            return raw
        low = str(raw).strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"{key}: expected a boolean, got {raw!r}")
    try:
        return kind(raw)
    except (TypeError, ValueError):
        raise UsageError(f"{key}: expected {kind.__name__}, got {raw!r}") from None


def read_config_file(path):
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in DEFAULTS:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _coerce(key, val)
    return values


def resolve_config(args):
    cfg = {k: v for k, (_, v) in DEFAULTS.items()}
    if args.config:
        if not os.path.isfile(args.config):
            raise UsageError(f"config file not found: {args.config}")
        cfg.update(read_config_file(args.config))
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = _coerce(key, val)
    if cfg["jobs"] is None:
        cfg["jobs"] = os.cpu_count() or 1
    if not 0 < cfg["q"] < 1:
        raise UsageError(f"q must lie in (0, 1), got {cfg['q']}")
    if not 0 < cfg["ci_level"] < 1:
        raise UsageError(f"ci_level must lie in (0, 1), got {cfg['ci_level']}")
    if cfg["fdr_scope"] not in ("global", "per_feature"):
        raise UsageError(f"fdr_scope must be global or per_feature, got {cfg['fdr_scope']!r}")
    if cfg["jobs"] < 1:
        raise UsageError("jobs must be at least 1")
    return cfg


def snapshot(cfg):
    """Config as recorded in the manifest: input paths reduced to file names."""
    snap = {k: v for k, v in cfg.items() if k not in _RUNTIME_KEYS}
    for key in ("masks", "fundus", "lipids"):
        if snap[key]:
            snap[key] = os.path.basename(os.path.normpath(snap[key]))
    return snap


def _require_file(path, what):
    if not path:
        raise UsageError(f"no {what} given")
    if not os.path.isfile(path):
        raise FileNotFoundError(f"{what} not found: {path}")


# ---------------------------------------------------------------------------
# commands


def cmd_extract(cfg):
    masks = cfg["masks"]
    if not masks:
        raise UsageError("no mask directory given (--masks)")
    if not os.path.isdir(masks):
        raise FileNotFoundError(f"mask directory not found: {masks}")
    morph = MorphometryConfig.from_mapping({k: cfg[k] for k in _MORPH_KEYS})
    layout = MaskLayout.from_mapping(cfg)
    result = extract_directory(masks, morph, layout, jobs=cfg["jobs"])
    os.makedirs(cfg["out"], exist_ok=True)
    if result.errors:
        err_path = os.path.join(cfg["out"], "extract_errors.csv")
        pd.DataFrame(result.errors, columns=["item", "error"]).to_csv(err_path, index=False,
                                                                     lineterminator="\n")
    if result.frame.empty:
        raise OculolipidError(f"no participant could be processed from {masks}")
    path = os.path.join(cfg["out"], "fundus_features.csv")
    result.frame.to_csv(path, index=False, na_rep="NA", lineterminator="\n")
    log.info("extracted %d participants (%d eye images, %d errors) -> %s", len(result.frame),
             len(result.per_eye), len(result.errors), path)
    return path


def cmd_analyze(cfg):
    _require_file(cfg["fundus"], "fundus CSV")
    _require_file(cfg["lipids"], "lipid CSV")
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    fundus = parse_fundus_csv(cfg["fundus"])
    lipids = parse_lipid_csv(cfg["lipids"], log10=cfg["log10_lipids"])
    cohort = merge_cohort(fundus, lipids, age_tolerance=cfg["age_tolerance"])
    log.info("merged cohort: %s", cohort.provenance)
    profile = profile_demographics(cohort, r_min=cfg["r_min"], q=cfg["q"], level=cfg["ci_level"])
    log.info("screening retained %d of %d features", len(profile.retained), len(profile.features))
    feats = profile.retained if cfg["restrict_to_retained"] else None
    results = lipid_retina_sweep(cohort, q=cfg["q"], scope=cfg["fdr_scope"], fundus_features=feats,
                                 level=cfg["ci_level"], jobs=cfg["jobs"])
    network = build_network(results, min_degree=cfg["min_degree"], q=cfg["q"])

    paths = {name: os.path.join(out, name) for name in (
        "associations.csv", "skipped_tests.csv", "network.json", "demographic_profile.csv",
        "cohort.csv", "cohort.json")}
    write_associations(results, paths["associations.csv"])
    write_skipped(results.skipped, paths["skipped_tests.csv"])
    write_json(network.to_json(), paths["network.json"])
    profile.table().to_csv(paths["demographic_profile.csv"], index=False, na_rep="NA",
                           lineterminator="\n", float_format="%.6g")
    write_cohort(cohort, paths["cohort.csv"], paths["cohort.json"])

    counts = {
        "n_participants": len(cohort),
        "n_fundus_features": len(feats or cohort.fundus_features),
        "n_lipid_features": len(cohort.lipid_features),
        "n_tests": len(results),
        "n_skipped": len(results.skipped),
        "n_significant": int(results.significant.sum()),
        "n_network_edges": len(network),
        "retained_features": list(profile.retained),
        "key_features": profile.key_features,
        **cohort.provenance,
    }
    manifest = build_manifest({"fundus": cfg["fundus"], "lipids": cfg["lipids"]},
                              {**snapshot(cfg), "sex_encoding": "M=0,F=1", "covariates": ["age", "sex"]},
                              counts, paths)
    write_json(manifest, os.path.join(out, "run_manifest.json"))
    log.info("%d tests, %d significant at q=%s (%s)", len(results), counts["n_significant"], cfg["q"],
             cfg["fdr_scope"])
    return paths


def cmd_report(cfg):
    out = cfg["out"]
    needed = {n: os.path.join(out, n) for n in ("associations.csv", "network.json", "cohort.csv", "cohort.json")}
    missing = [n for n, p in needed.items() if not os.path.isfile(p)]
    if missing:
        raise FileNotFoundError(f"analysis output missing in {out}: {', '.join(missing)} (run analyze first)")
    cohort = read_cohort(needed["cohort.csv"], needed["cohort.json"])
    results = read_associations(needed["associations.csv"], q=cfg["q"], scope=cfg["fdr_scope"])
    with open(needed["network.json"], encoding="utf-8") as fh:
        network = AssociationNetwork.from_json(json.load(fh))
    profile = profile_demographics(cohort, r_min=cfg["r_min"], q=cfg["q"], level=cfg["ci_level"])
    written = write_report(out, results, network, profile, cohort, top_k=cfg["top_k"], kde=cfg["kde"])
    log.info("wrote %d report files under %s", len(written), out)
    return written


def simulation_spec(cfg):
    lipids = default_lipid_names(cfg["sim_n_lipids"])
    k = min(cfg["sim_n_planted"], len(lipids))
    r = cfg["sim_planted_r"]
    planted = tuple(
        (cfg["sim_planted_feature"], lipids[i], -r if cfg["sim_alternate_signs"] and i % 2 else r)
        for i in range(k))
    return PlantedEffectSpec(n=cfg["sim_n"], lipid_features=tuple(lipids), planted=planted,
                             missing_rate=cfg["sim_missing_rate"])


def cmd_simulate(cfg):
    spec = simulation_spec(cfg)
    cohort = simulate_cohort(spec, cfg["seed"])
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    fundus, lipids = split_tables(cohort)
    paths = {"fundus": os.path.join(out, "fundus.csv"), "lipids": os.path.join(out, "lipids.csv"),
             "truth": os.path.join(out, "ground_truth.json")}
    write_table(fundus, paths["fundus"])
    write_table(lipids, paths["lipids"])
    write_json({"seed": cfg["seed"], "spec": spec.to_json()}, paths["truth"])
    log.info("simulated %d participants x %d lipids -> %s", spec.n, len(spec.lipids()), out)
    return paths


def cmd_all(cfg):
    bundled = bundled_paths()
    for key in ("masks", "fundus", "lipids"):
        if not cfg[key]:
            cfg[key] = bundled[key]
    cmd_extract(cfg)
    cmd_analyze(cfg)
    cmd_report(cfg)


COMMANDS = {"extract": cmd_extract, "analyze": cmd_analyze, "report": cmd_report,
            "simulate": cmd_simulate, "all": cmd_all}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file (flags override it)")
    common.add_argument("--jobs", type=int, help="worker count (default: available cores)")
    common.add_argument("--seed", type=int, help="random seed for simulation")
    common.add_argument("--q", type=float, help="FDR level (default 0.05)")
    common.add_argument("--fdr-scope", dest="fdr_scope", choices=("global", "per_feature"))
    common.add_argument("--out", help="output directory")
    common.add_argument("--masks", help="directory of <id>_<L|R>_<artery|vein>.png masks")
    common.add_argument("--fundus", help="fundus feature CSV")
    common.add_argument("--lipids", help="lipid CSV")

    parser = _Parser(prog="oculolipid", description="Retinal morphometry and lipidome association analysis.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "extract": "vessel features from mask PNGs",
        "analyze": "merge tables, profile demographics, run the association sweep",
        "report": "figures and tables from analyze outputs",
        "simulate": "synthetic cohort with planted associations",
        "all": "extract, analyze and report (bundled data by default)",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def _setup_logging():
    level = os.environ.get("OCULOLIPID_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"oculolipid: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OculolipidError, FileNotFoundError, ValueError) as exc:
        print(f"oculolipid: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:  # noqa: BLE001 - last-resort guard for the exit-code contract
        log.exception("internal error")
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
