"""Smoke test for the `abbg` extension module.

Build and install first, e.g.
    maturin build --release -m crates/python/Cargo.toml -o dist && pip install dist/abbg-*.whl
"""

import math
import sys
import tempfile

import abbg


def check(cond, what):
    if not cond:
        print(f"FAIL: {what}")
        sys.exit(1)
    print(f"ok: {what}")


def main():
    b = abbg.BoundingBox(10.0, 20.0, 16.0, 12.0)
    check(b.iou(b) == 1.0 and b.area() == 192.0, "box basics")

    boxes, ious, selected, zeta = abbg.adversarial_boxes(b, seed=3)
    check(len(boxes) == 1024 and all(0.0 < v < 1.0 for v in ious), "1024 boxes, IoU in (0, 1)")
    check(len(selected) == 820 and zeta == min(ious[i] for i in selected), "selection keeps 820, zeta is the minimum")

    seqs = abbg.synth_suite(seed=7, count=2, frames=30)
    seq = seqs[0]
    check(len(seq) == 30 and seq.name == "synth_00", "synthetic sequence")

    tracker = abbg.Tracker(seq.frame(0), seq.groundtruth[0])
    pred = tracker.track(seq.frame(1))
    check(pred.iou(seq.groundtruth[1]) > 0.5, "tracker follows the object")
    grad, origin = tracker.box_gradient(seq.frame(2), [1.0, 0.0, 0.0, 0.0])
    check(len(grad) > 0 and any(v != 0.0 for row in grad for v in row), "pullback is nonzero")

    clean = abbg.evaluate(seq, attack="none", seed=1, protocol="ope")
    attacked = abbg.evaluate(seq, attack="abbg", seed=1, protocol="ope")
    check(attacked["max_delta_linf"] <= 10.0, "attack stays inside the budget")
    check(attacked["ao"] < clean["ao"], f"attack lowers AO ({clean['ao']:.3f} -> {attacked['ao']:.3f})")
    zero = abbg.evaluate(seq, attack="abbg", seed=1, protocol="ope", epsilon=0.0)
    check(zero["boxes"][-1].to_tuple() == clean["boxes"][-1].to_tuple(), "epsilon 0 matches the clean run")

    frame = seq.frame(3)
    check(abbg.ssim(frame, frame) == 100.0, "ssim of identical images")
    check(math.isclose(abbg.drop_percent(0.734, 0.027), 96.3215, rel_tol=1e-4), "drop percent")
    check(abbg.success_auc([1.0] * 4) == 100 / 101, "success AUC")

    gc = abbg.gradcheck()
    check(gc["passed"], f"gradient check (worst {gc['worst']:.2e})")

    with tempfile.TemporaryDirectory() as tmp:
        back = abbg.load_sequence(seq.save(tmp))
        check(back.frame(5) == seq.frame(5), "sequence save/load round trip")

    try:
        abbg.BoundingBox(0, 0, -1, 4)
    except ValueError:
        print("ok: invalid box rejected")
    else:
        check(False, "invalid box rejected")


if __name__ == "__main__":
    main()
