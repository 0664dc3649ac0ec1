"""A design where pooling fails badly.

One group holds 1000 tightly clustered observations and nineteen groups
hold five each, with group means spread widely. The pooled interval is
driven by the large group and almost never contains a new group's draw.
Subsampling one observation per group restores the nominal level.

    python demos/pathological_pooling.py
"""

from reconform.simlab import MethodSpec, pathological_design, run_experiment

TRIALS = 300
SEED = 11


def main():
    for convention in ("sd", "variance"):
        design = pathological_design(convention)
        naive = run_experiment(design, MethodSpec("naive"), TRIALS, SEED)
        sub = run_experiment(design, MethodSpec("subsample"), TRIALS, SEED)
        assert naive.data_digest == sub.data_digest
        print(f"{design.design_id}: pooled {naive.coverage:.3f}, "
              f"subsampled {sub.coverage:.3f} (target 0.90)")


if __name__ == "__main__":
    main()
