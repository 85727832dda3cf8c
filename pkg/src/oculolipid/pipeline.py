"""End-to-end association workflow.

demographic profiling -> feature screening -> fundus x lipid partial
correlation sweep (covariates age and sex) -> BH-FDR -> association network.
Also holds the planted-effect cohort simulator and the export formats.
"""

import csv
import datetime as _dt
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

from . import kernels
from .cohort import MergedCohort, lipid_subclass, summarize
from .errors import ConstantInput, InvalidSpec, MissingColumn, OculolipidError
from .morphometry import FEATURE_NAMES
from .stats import (
    AdjustedResultSet,
    CorrelationResult,
    _CONSTANT_RTOL,
    _fisher_ci_vec,
    adjust,
    bh_fdr,
    cluster_features,
    correlation_matrix,
    partial_correlation,
    residualize_columns,
    screen_features,
    two_sided_p,
)

log = logging.getLogger(__name__)

COVARIATES = ("age", "sex")
ASSOCIATION_COLUMNS = ["fundus_feature", "lipid_feature", "r", "CI_lower", "CI_upper",
                       "P-value", "P-adjusted", "n"]


def fmt(x):
    """Number formatting shared by every CSV export and figure label."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "NA"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.6g}"


# ---------------------------------------------------------------------------
# demographic profile


@dataclass
class DemographicProfile:
    features: list
    age_results: list
    age_p_adjusted: np.ndarray
    sex_results: list
    sex_p_adjusted: np.ndarray
    retained: list
    summary: pd.DataFrame
    clusters: object = None
    r_min: float = 0.1
    q: float = 0.05

    @property
    def key_features(self):
        return list(self.clusters.representatives) if self.clusters is not None else []

    def table(self):
        rows = []
        summ = self.summary.set_index(["column", "stratum"])
        for i, f in enumerate(self.features):
            a, s = self.age_results[i], self.sex_results[i]
            row = {
                "feature": f,
                "r_age": a.r, "CI_lower": a.ci_lower, "CI_upper": a.ci_upper,
                "P-value": a.p, "P-adjusted": self.age_p_adjusted[i],
                "r_sex": s.r, "P-value_sex": s.p, "P-adjusted_sex": self.sex_p_adjusted[i],
                "n": a.n_used, "retained": f in self.retained,
            }
            for stratum in ("Male", "Female", "All"):
                if (f, stratum) in summ.index:
                    row[f"{stratum.lower()}_mean"] = summ.loc[(f, stratum), "mean"]
                    row[f"{stratum.lower()}_sd"] = summ.loc[(f, stratum), "sd"]
            rows.append(row)
        return pd.DataFrame(rows)


def profile_demographics(cohort, r_min=0.1, q=0.05, features=None, cut_height=0.5, level=0.95):
    """Age and sex associations of each fundus feature.

    For every feature: partial correlation with age controlling for sex and
    with sex controlling for age, each family BH-adjusted.  Features with
    ``|r_age| >= r_min`` and adjusted p < q are retained; retained features
    are then clustered on ``1 - |r|`` to pick representatives.
    """
    features = list(features or cohort.fundus_features)
    frame = cohort.frame
    age = frame["age"].to_numpy(dtype=np.float64)
    sex = frame["sex"].to_numpy(dtype=np.float64)
    age_res, sex_res = [], []
    for f in features:
        v = frame[f].to_numpy(dtype=np.float64)
        try:
            age_res.append(partial_correlation(v, age, sex, f, "age", ("sex",), level))
            sex_res.append(partial_correlation(v, sex, age, f, "sex", ("age",), level))
        except ConstantInput as exc:
            raise ConstantInput(f) from exc
    age_padj, _ = bh_fdr([r.p for r in age_res], q)
    sex_padj, _ = bh_fdr([r.p for r in sex_res], q)
    retained = screen_features(age_res, age_padj, r_min, q)
    clusters = None
    if retained:
        clusters = cluster_features(correlation_matrix(frame, retained), retained, cut_height)
    return DemographicProfile(features, age_res, age_padj, sex_res, sex_padj, retained,
                              summarize(frame, features), clusters, r_min, q)


# ---------------------------------------------------------------------------
# sweep


def _fast_block(X, Y, A, fnames, lnames):
    """Residualise complete columns once and correlate every pair."""
    Q, _ = np.linalg.qr(A)

    def prep(M, names):
        E = np.empty_like(M)
        bad = {}
        for j in range(M.shape[1]):
            col = M[:, j]
            e = col - Q @ (Q.T @ col)
            e = e - e.mean()
            scale = np.linalg.norm(col - col.mean())
            norm = np.linalg.norm(e)
            if np.ptp(col) == 0 or norm <= _CONSTANT_RTOL * scale:
                bad[j] = f"ConstantInput: {names[j]}"
                E[:, j] = 0.0
            else:
                E[:, j] = e / norm
        return E, bad

    EX, badx = prep(X, fnames)
    EY, bady = prep(Y, lnames)
    r = np.clip(kernels.pair_dots(EX, EY), -1.0, 1.0)
    return r, badx, bady


def lipid_retina_sweep(cohort, q=0.05, scope="global", fundus_features=None, lipid_features=None,
                       covariates=COVARIATES, level=0.95, jobs=1):
    """Partial correlation of every (fundus, lipid) pair controlling for covariates.

    Pairs whose columns and covariates are complete share one residualisation
    per column; pairs touching missing cells are tested individually on their
    complete rows.  Degenerate pairs are recorded in ``skipped`` with a
    reason.  Results are ordered by (fundus, lipid) name.
    """
    fnames = sorted(fundus_features or cohort.fundus_features)
    lnames = sorted(lipid_features or cohort.lipid_features)
    if not fnames or not lnames:
        raise OculolipidError("sweep needs at least one fundus and one lipid feature")
    frame = cohort.frame
    cov = list(covariates)
    k = len(cov)
    Z = frame[cov].to_numpy(dtype=np.float64)
    base = ~np.isnan(Z).any(axis=1)
    X = frame[fnames].to_numpy(dtype=np.float64)
    Y = frame[lnames].to_numpy(dtype=np.float64)
    fx_complete = ~np.isnan(X[base]).any(axis=0)
    ly_complete = ~np.isnan(Y[base]).any(axis=0)
    n_base = int(base.sum())

    slots = {}
    skipped = []
    fi = np.flatnonzero(fx_complete)
    li = np.flatnonzero(ly_complete)
    if fi.size and li.size and n_base >= k + 4:
        A = np.column_stack([np.ones(n_base), Z[base]])
        r, badx, bady = _fast_block(X[base][:, fi], Y[base][:, li], A,
                                    [fnames[i] for i in fi], [lnames[j] for j in li])
        df = n_base - 2 - k
        p = two_sided_p(r, df)
        lo, hi = _fisher_ci_vec(r, n_base, k, level)
        for a, i in enumerate(fi):
            for b, j in enumerate(li):
                reason = badx.get(a) or bady.get(b)
                if reason:
                    skipped.append((fnames[i], lnames[j], reason))
                    continue
                slots[(i, j)] = CorrelationResult(
                    fnames[i], lnames[j], tuple(cov), float(r[a, b]), float(p[a, b]),
                    float(lo[a, b]), float(hi[a, b]), n_base, df)

    slow = [(i, j) for i in range(len(fnames)) for j in range(len(lnames))
            if not (fx_complete[i] and ly_complete[j] and n_base >= k + 4)]

    def one(pair):
        i, j = pair
        try:
            return pair, partial_correlation(X[:, i], Y[:, j], Z, fnames[i], lnames[j], cov, level)
        except OculolipidError as exc:
            return pair, f"{type(exc).__name__}: {exc}"

    if jobs > 1 and len(slow) > 64:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(one, slow))
    else:
        done = [one(pair) for pair in slow]
    for (i, j), res in done:
        if isinstance(res, str):
            skipped.append((fnames[i], lnames[j], res))
        else:
            slots[(i, j)] = res

    results = [slots[key] for key in sorted(slots)]
    skipped.sort()
    return adjust(results, q, scope, skipped)


# ---------------------------------------------------------------------------
# network and rankings


@dataclass
class AssociationNetwork:
    fundus_nodes: list  # (name, degree)
    lipid_nodes: list  # (name, subclass, degree)
    edges: list  # dicts: source, target, r, p_adjusted, sign

    def __len__(self):
        return len(self.edges)

    @property
    def degrees(self):
        return dict(self.fundus_nodes)

    def to_json(self):
        nodes = [{"id": n, "side": "fundus", "subclass": None, "degree": d}
                 for n, d in self.fundus_nodes]
        nodes += [{"id": n, "side": "lipid", "subclass": s, "degree": d}
                  for n, s, d in self.lipid_nodes]
        return {"nodes": nodes, "edges": [dict(e) for e in self.edges]}

    @classmethod
    def from_json(cls, data):
        fundus = [(n["id"], n["degree"]) for n in data["nodes"] if n["side"] == "fundus"]
        lipids = [(n["id"], n["subclass"], n["degree"]) for n in data["nodes"] if n["side"] == "lipid"]
        return cls(fundus, lipids, [dict(e) for e in data["edges"]])


def build_network(result_set, min_degree=5, q=None):
    """Bipartite network of significant links.

    A fundus feature is included only with strictly more than ``min_degree``
    significant lipid partners.  Nodes are ordered by degree (descending)
    then name.
    """
    q = result_set.q if q is None else q
    by_fundus = {}
    for res, pa in zip(result_set.results, result_set.p_adjusted):
        if pa < q:
            by_fundus.setdefault(res.x_name, []).append((res, float(pa)))
    edges, lipid_deg = [], {}
    fundus_nodes = []
    for name, links in by_fundus.items():
        if len(links) <= min_degree:
            continue
        fundus_nodes.append((name, len(links)))
        for res, pa in links:
            edges.append({"source": res.x_name, "target": res.y_name, "r": res.r,
                          "p_adjusted": pa, "sign": -1 if res.r < 0 else 1})
            lipid_deg[res.y_name] = lipid_deg.get(res.y_name, 0) + 1
    fundus_nodes.sort(key=lambda t: (-t[1], t[0]))
    lipid_nodes = sorted(((n, lipid_subclass(n) or "other", d) for n, d in lipid_deg.items()),
                         key=lambda t: (-t[2], t[0]))
    edges.sort(key=lambda e: (e["source"], e["target"]))
    return AssociationNetwork(fundus_nodes, lipid_nodes, edges)


def top_associations(result_set, k=20):
    """Significant results by |r| descending; ties by p then pair name."""
    sig = result_set.significant_results()
    sig.sort(key=lambda t: (-abs(t[0].r), t[0].p, t[0].x_name, t[0].y_name))
    return sig[:k]


def significant_counts(result_set, features=None):
    """Significant lipid partners per fundus feature, sorted descending then by name."""
    counts = {f: 0 for f in (features or [])}
    for res, s in zip(result_set.results, result_set.significant):
        counts.setdefault(res.x_name, 0)
        if s:
            counts[res.x_name] += 1
    return sorted(counts.items(), key=lambda t: (-t[1], t[0]))


# ---------------------------------------------------------------------------
# exports


def write_associations(result_set, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ASSOCIATION_COLUMNS)
        for res, pa in zip(result_set.results, result_set.p_adjusted):
            w.writerow([res.x_name, res.y_name, fmt(res.r), fmt(res.ci_lower), fmt(res.ci_upper),
                        fmt(res.p), fmt(pa), fmt(res.n_used)])


def read_associations(path, q=0.05, scope="global", k=len(COVARIATES)):
    frame = pd.read_csv(path, dtype={"fundus_feature": str, "lipid_feature": str})
    missing = [c for c in ASSOCIATION_COLUMNS if c not in frame.columns]
    if missing:
        raise MissingColumn(missing[0])
    cols = {c: frame[c].tolist() for c in ASSOCIATION_COLUMNS}
    results = [
        CorrelationResult(f, l, COVARIATES[:k], float(r), float(p), float(lo), float(hi), int(n),
                          int(n) - 2 - k)
        for f, l, r, lo, hi, p, _, n in zip(*(cols[c] for c in ASSOCIATION_COLUMNS))
    ]
    padj = frame["P-adjusted"].to_numpy(dtype=np.float64)
    return AdjustedResultSet(results, padj, padj < q, q, scope)


def write_skipped(skipped, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fundus_feature", "lipid_feature", "reason"])
        w.writerows(skipped)


def write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def run_timestamp():
    """UTC run time; honours SOURCE_DATE_EPOCH for reproducible manifests."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch:
        when = _dt.datetime.fromtimestamp(int(epoch), tz=_dt.timezone.utc)
    else:
        when = _dt.datetime.now(tz=_dt.timezone.utc)
    return when.strftime("%Y-%m-%dT%H:%M:%SZ")


def build_manifest(inputs, config, counts, outputs):
    return {
        "inputs": {k: {"file": os.path.basename(p), "sha256": file_digest(p)}
                   for k, p in sorted(inputs.items())},
        "config": dict(sorted(config.items())),
        "counts": dict(counts),
        "outputs": {k: file_digest(p) for k, p in sorted(outputs.items())},
        "timestamp": run_timestamp(),
    }


# ---------------------------------------------------------------------------
# simulation

# location/scale of the simulated features, on the scale of a typical adult cohort
FUNDUS_SCALES = {
    "artery_average_width": (18305.1864, 1287.0806),
    "artery_vessel_density": (0.0391, 0.0045),
    "artery_fractal_dimension": (1.42, 0.03),
    "artery_distance_tortuosity": (1.10, 0.02),
    "artery_squared_curvature_tortuosity": (0.0030, 0.0005),
    "artery_tortuosity_density": (0.6971, 0.0334),
    "vein_average_width": (19413.9884, 1259.6486),
    "vein_vessel_density": (0.0499, 0.0043),
    "vein_fractal_dimension": (1.45, 0.03),
    "vein_distance_tortuosity": (1.09, 0.02),
    "vein_squared_curvature_tortuosity": (0.0029, 0.0005),
    "vein_tortuosity_density": (0.7060, 0.0249),
    "average_width": (18860.0, 1200.0),
    "vessel_density": (0.089, 0.007),
    "fractal_dimension": (1.55, 0.03),
    "distance_tortuosity": (1.09, 0.02),
    "squared_curvature_tortuosity": (0.0035, 0.0005),
    "tortuosity_density": (0.70, 0.03),
}

# standardised age slopes of the features
DEFAULT_AGE_EFFECTS = {
    "artery_average_width": -0.22,
    "artery_vessel_density": -0.24,
    "artery_tortuosity_density": 0.11,
    "vein_vessel_density": -0.18,
    "vein_tortuosity_density": 0.10,
    "vessel_density": -0.2,
    "fractal_dimension": -0.15,
    "artery_fractal_dimension": -0.12,
    "vein_fractal_dimension": -0.12,
    "average_width": -0.12,
    "tortuosity_density": 0.12,
}

# standardised female-minus-male shifts
DEFAULT_SEX_EFFECTS = {
    "artery_average_width": 0.39,
    "vein_average_width": 0.33,
    "artery_tortuosity_density": 0.24,
    "vein_tortuosity_density": 0.17,
}

_SUBCLASS_CYCLE = ("tag", "dag", "cer", "pc", "pe", "lysopc", "sm", "ps", "glccer", "fa")


def default_lipid_names(k):
    names = []
    for i in range(k):
        sub = _SUBCLASS_CYCLE[i % len(_SUBCLASS_CYCLE)]
        chain = 30 + (i // len(_SUBCLASS_CYCLE)) % 30
        unsat = (i // (len(_SUBCLASS_CYCLE) * 30)) + i % 7
        names.append(f"{sub}_{chain}:{unsat}")
    return names


@dataclass
class PlantedEffectSpec:
    n: int = 2000
    fundus_features: tuple = FEATURE_NAMES
    lipid_features: tuple = ()
    n_lipids: int = 60
    planted: tuple = ()  # (fundus, lipid, partial r)
    age_effects: dict = field(default_factory=lambda: dict(DEFAULT_AGE_EFFECTS))
    sex_effects: dict = field(default_factory=lambda: dict(DEFAULT_SEX_EFFECTS))
    lipid_age_effect: float = 0.15
    lipid_sex_effect: float = 0.2
    noise_scale: float = 1.0
    missing_rate: float = 0.0
    age_mean: float = 52.64
    age_sd: float = 7.87
    female_fraction: float = 0.513

    def lipids(self):
        return list(self.lipid_features) if self.lipid_features else default_lipid_names(self.n_lipids)

    def validate(self):
        if self.n <= 0:
            raise InvalidSpec("n must be positive")
        if not self.fundus_features:
            raise InvalidSpec("no fundus features")
        lipids = self.lipids()
        if not lipids or len(set(lipids)) != len(lipids):
            raise InvalidSpec("lipid names must be non-empty and unique")
        if not 0 <= self.missing_rate < 1:
            raise InvalidSpec("missing_rate must be in [0, 1)")
        if self.noise_scale <= 0:
            raise InvalidSpec("noise_scale must be positive")
        fset, lset = set(self.fundus_features), set(lipids)
        load = {}
        for f, l, r in self.planted:
            if f not in fset or l not in lset:
                raise InvalidSpec(f"planted pair ({f}, {l}) names an unknown feature")
            if not -1 < r < 1:
                raise InvalidSpec(f"planted r {r} outside (-1, 1)")
            load[l] = load.get(l, 0.0) + r * r
        over = [l for l, v in load.items() if v >= 1.0]
        if over:
            raise InvalidSpec(f"planted correlations on {over[0]} exceed unit variance")

    def to_json(self):
        d = asdict(self)
        d["fundus_features"] = list(self.fundus_features)
        d["lipid_features"] = self.lipids()
        d["planted"] = [list(p) for p in self.planted]
        return d


def simulate_cohort(spec, seed):
    """Synthetic merged cohort with planted partial correlations.

    Each feature is ``age_slope * age_z + sex_shift * (sex - p_f) + noise``
    in standard units; lipid noise is mixed with the noise of its planted
    fundus partners so the partial correlation given age and sex equals the
    planted r in the population.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    n = spec.n
    fnames = list(spec.fundus_features)
    lnames = spec.lipids()
    age_z = rng.standard_normal(n)
    age = np.clip(np.round(spec.age_mean + spec.age_sd * age_z, 2), 18.0, 99.0)
    age_z = (age - spec.age_mean) / spec.age_sd
    sex = (rng.random(n) < spec.female_fraction).astype(np.float64)
    sex_c = sex - spec.female_fraction
    e_f = rng.standard_normal((n, len(fnames)))
    u_l = rng.standard_normal((n, len(lnames)))
    fidx = {f: i for i, f in enumerate(fnames)}
    lidx = {l: j for j, l in enumerate(lnames)}
    mix = np.zeros((len(fnames), len(lnames)))
    for f, l, r in spec.planted:
        mix[fidx[f], lidx[l]] += r
    resid = np.sqrt(1.0 - (mix ** 2).sum(axis=0))
    e_l = e_f @ mix + u_l * resid

    data = {"participant_id": [f"P{i:05d}" for i in range(n)], "age": age, "sex": sex}
    for i, f in enumerate(fnames):
        std = (spec.age_effects.get(f, 0.0) * age_z + spec.sex_effects.get(f, 0.0) * sex_c
               + spec.noise_scale * e_f[:, i])
        loc, scale = FUNDUS_SCALES.get(f, (0.0, 1.0))
        data[f] = loc + scale * std
    for j, l in enumerate(lnames):
        std = (spec.lipid_age_effect * age_z + spec.lipid_sex_effect * sex_c
               + spec.noise_scale * e_l[:, j])
        data[l] = 1.0 + 0.2 * std
    frame = pd.DataFrame(data, columns=["participant_id", "age", "sex"] + fnames + lnames)
    if spec.missing_rate > 0:
        cols = fnames + lnames
        holes = rng.random((n, len(cols))) < spec.missing_rate
        vals = frame[cols].to_numpy()
        vals[holes] = np.nan
        frame[cols] = vals
    provenance = {"n_fundus_only": 0, "n_lipid_only": 0, "n_joined": n, "n_rejected": 0}
    return MergedCohort(frame, fnames, lnames, provenance, [])
