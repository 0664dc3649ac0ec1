"""Label sets for a new group's binary outcome under a logistic working model.

For each trial a covariate x* is drawn for a new group and the methods
return a subset of {0, 1}. Coverage of the true label and of the wrong
label are both reported, since including the wrong label is what makes a
set uninformative.

    python demos/supervised_labels.py
"""

from reconform.simlab import MethodSpec, SupDesign, run_experiment

TRIALS = 100
SEED = 3


def main():
    design = SupDesign(k=100, n_j=100, mu=1.0, tau=0.1)
    for m in (MethodSpec("naive"), MethodSpec("subsample"),
              MethodSpec("randomset", variant="mean")):
        s = run_experiment(design, m, TRIALS, SEED)
        print(f"{m.method_id:<40} correct {s.coverage:.3f}  "
              f"incorrect {s.incorrect_coverage:.3f}  size {s.mean_size:.2f}")


if __name__ == "__main__":
    main()
