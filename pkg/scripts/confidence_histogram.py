"""Train the blob classifier from a config and show its calibrated confidence histogram.

The gate only helps when most correct predictions sit well above the
threshold, so this is the first thing to look at when picking tau.
"""
import argparse

from confgate.config import load_config
from confgate.grid import fit_model, load_data
from confgate.model import TemperatureScaler, confidence_histogram, expected_calibration_error


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config", nargs="?", default="configs/desk_rnd.toml")
    ap.add_argument("--bins", type=int, default=10)
    args = ap.parse_args()

    cfg = load_config(args.config)
    splits = load_data(cfg)
    model, scaler = fit_model(cfg, splits)
    test = splits["test"]
    logits = model.logits_batch(test.X)
    print(f"T = {scaler.T:.3f}  test ECE {expected_calibration_error(logits, test.y, TemperatureScaler()):.4f}"
          f" -> {expected_calibration_error(logits, test.y, scaler):.4f}")
    edges, frac, cum = confidence_histogram(logits, test.y, scaler, args.bins)
    for lo, hi, f, c in zip(edges[:-1], edges[1:], frac, cum):
        print(f"({lo:.1f}, {hi:.1f}]  {f:6.3f}  cum {c:6.3f}  {'#' * round(60 * f)}")


if __name__ == "__main__":
    main()
