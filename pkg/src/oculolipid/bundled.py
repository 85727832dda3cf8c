"""The small synthetic dataset shipped with the package, and how it is built.

``python -m oculolipid.bundled DIR`` regenerates the files; the tests check
the shipped copy matches a fresh build byte for byte.
"""

import os
import sys

from .cohort import write_table
from .masks import write_binary_png
from .pipeline import PlantedEffectSpec, simulate_cohort, write_json
from .synthetic import synthetic_mask

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")
SEED = 20240611
MASK_PARTICIPANTS = ("P00000", "P00001")

LIPIDS = (
    "tag_50:0", "tag_52:2", "tag_54:3", "dag_36:2", "dag_34:1", "cer_d18:1/c24:0",
    "cer_d18:0/c16:0", "pc_34:1", "pc_36:4", "pe_38:4", "ps_36:1", "pg_34:1", "pi_38:4",
    "sm_d18:1/16:0", "lysopc_16:0", "lysope_18:1", "glccer_d18:1/24:1", "laccer_d18:1/16:0",
    "fa_20:4", "acca_16:0", "gsl_gm3", "coenzyme_q10", "22:6_cholesteryl_ester", "pc_38:6",
)

PLANTED = (
    ("artery_average_width", "tag_50:0", -0.30),
    ("artery_average_width", "tag_52:2", -0.28),
    ("artery_average_width", "dag_36:2", -0.26),
    ("artery_average_width", "cer_d18:0/c16:0", 0.30),
    ("artery_average_width", "pc_36:4", 0.25),
    ("artery_average_width", "sm_d18:1/16:0", 0.27),
    ("artery_average_width", "lysopc_16:0", 0.24),
    ("artery_average_width", "fa_20:4", -0.25),
    ("vein_vessel_density", "tag_54:3", -0.24),
    ("vein_vessel_density", "pe_38:4", 0.22),
    ("vein_tortuosity_density", "coenzyme_q10", 0.2),
)


def bundled_spec():
    return PlantedEffectSpec(n=400, lipid_features=LIPIDS, planted=PLANTED, missing_rate=0.01)


def split_tables(cohort):
    """Fundus and lipid tables, each carrying the demographic columns."""
    demo = ["participant_id", "age", "sex"]
    return cohort.frame[demo + list(cohort.fundus_features)], cohort.frame[demo + list(cohort.lipid_features)]


def build(directory, seed=SEED, with_masks=True):
    os.makedirs(directory, exist_ok=True)
    spec = bundled_spec()
    cohort = simulate_cohort(spec, seed)
    fundus, lipids = split_tables(cohort)
    paths = {
        "fundus": os.path.join(directory, "fundus.csv"),
        "lipids": os.path.join(directory, "lipids.csv"),
        "truth": os.path.join(directory, "ground_truth.json"),
    }
    write_table(fundus, paths["fundus"])
    write_table(lipids, paths["lipids"])
    write_json({"seed": seed, "spec": spec.to_json()}, paths["truth"])
    if with_masks:
        mask_dir = os.path.join(directory, "masks")
        os.makedirs(mask_dir, exist_ok=True)
        for i, pid in enumerate(MASK_PARTICIPANTS):
            for j, eye in enumerate("LR"):
                m = synthetic_mask(seed + 10 * i + j, participant_id=pid, eye=eye)
                write_binary_png(m.artery, os.path.join(mask_dir, f"{pid}_{eye}_artery.png"))
                write_binary_png(m.vein, os.path.join(mask_dir, f"{pid}_{eye}_vein.png"))
        paths["masks"] = mask_dir
    return paths


def bundled_paths():
    return {
        "fundus": os.path.join(DATA_DIR, "fundus.csv"),
        "lipids": os.path.join(DATA_DIR, "lipids.csv"),
        "truth": os.path.join(DATA_DIR, "ground_truth.json"),
        "masks": os.path.join(DATA_DIR, "masks"),
    }


if __name__ == "__main__":
    build(sys.argv[1] if len(sys.argv) > 1 else DATA_DIR)
