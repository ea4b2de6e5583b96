"""What each training strategy actually does with a missing label.

Four strategies share one question — what is the loss at an entry nobody
labeled?
  B0  treats it as a negative (cheap, and wrong exactly when the class is
      present but unlabeled),
  B1  removes it from the loss entirely,
  LE  asks a trained teacher whether it is suspicious and then removes only
      the suspicious ones (demo 05),
  MT  keeps B1's loss and adds a consistency term pulling the student
      toward an averaged teacher on *every* entry (demo 06).
This demo shows the loss values and, more telling, the gradients.
"""

import numpy as np

import pllearn as pl


def main():
    probs = np.array([[0.9, 0.2, 0.6],
                      [0.3, 0.8, 0.5]])
    states = np.array([[1, 0, -1],
                       [-1, 1, 0]], dtype=np.int8)
    print("clip probabilities:")
    print(probs)
    print("labels (-1 = missing):")
    print(states)

    full_loss, full_grad = pl.bce_full(probs, states)
    masked_loss, masked_grad = pl.bce_masked(probs, states)
    print(f"\nB0 loss (missing treated as negative): {full_loss:.4f}")
    print(f"B1 loss (missing removed):              {masked_loss:.4f}")

    print("\nB0 gradient — nonzero everywhere, including the missing entries:")
    print(np.round(full_grad, 3))
    print("B1 gradient — exactly zero at the missing entries:")
    print(np.round(masked_grad, 3))
    missing = states == -1
    print("zeros at missing positions:", bool((masked_grad[missing] == 0).all()))

    # B0 pushes the (0, 2) entry DOWN although the clip may well contain the
    # class; that is the systematic bias the other strategies remove.
    print(f"\nat entry (0,2): prob {probs[0, 2]:.1f}, no label; "
          f"B0 gradient {full_grad[0, 2]:+.3f} (pushes toward 0), "
          f"B1 gradient {masked_grad[0, 2]:+.3f}")

    print("\nThe mean-teacher objective = masked BCE + beta * consistency:")
    teacher = np.array([[0.85, 0.25, 0.55],
                        [0.35, 0.75, 0.45]])
    for beta in (0.0, 1.0, 3.0):
        total, grad, sup, cons = pl.combined_loss(probs, teacher, states, beta)
        print(f"  beta={beta}: total {total:.4f} = supervised {sup:.4f} "
              f"+ {beta} * consistency {cons:.4f}")
    total0, grad0, _, _ = pl.combined_loss(probs, teacher, states, 0.0)
    print("  beta=0 reduces to B1 exactly:",
          total0 == masked_loss and bool(np.array_equal(grad0, masked_grad)))

    # the consistency term covers every entry, observed or not
    _, cons_grad = pl.consistency_mse(probs, teacher)
    print("  consistency gradient nonzero at missing entries:",
          bool((cons_grad[missing] != 0).all()))


if __name__ == "__main__":
    main()
