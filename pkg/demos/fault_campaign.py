"""Inject NaN faults at random mission times and report the fallback behaviour.

Usage: python3 demos/fault_campaign.py [model.nnfc] [n]
"""

import sys

from neuralfc import modelpack
from neuralfc.cascade import CascadeGains
from neuralfc.config import default_config
from neuralfc.dynamics import VehicleParams
from neuralfc.flight import fault_campaign


def main():
    model = sys.argv[1] if len(sys.argv) > 1 else modelpack.bundled_policy_path()
    n = int(sys.argv[2]) if len(sys.argv) > 2 else 20
    cfg = default_config()
    params = VehicleParams.from_config(cfg)
    gains = CascadeGains.from_config(cfg, params)
    result = fault_campaign(params, gains, modelpack.read(model), n=n, seed=0)
    for r in result.injections:
        print(f"fault at {r['fault_at']:6.2f}s  fallback after {r['ticks_to_fallback']} tick(s)  "
              f"settled after {r['settled_after']:.3f}s  max error {r['max_error_after']:.3f} m")
    print(f"{result.switched_within_one_tick}/{n} switched within one tick, {result.recovered}/{n} recovered")


if __name__ == "__main__":
    main()
