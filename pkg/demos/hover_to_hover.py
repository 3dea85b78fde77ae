"""Closed-loop flight from hover at (0, 0, 2) to hover at (10, 0, 2).

Prints the arrival time, peak speed and solver statistics, and a coarse
trace of position, speed and collective thrust.

    python3 demos/hover_to_hover.py
"""

import numpy as np

from pmpc.scenario_io import load_scenario, resolve_scenario
from pmpc.sim_harness import compute_metrics, run_scenario


def main():
    sc = load_scenario(resolve_scenario("hover10m"))
    log = run_scenario(sc)
    m = compute_metrics(log)
    print(f"arrival {m.lap_time:.3f} s, top speed {m.top_speed:.2f} m/s")
    print(f"solve time median {1e3 * np.median(log.solve_times):.1f} ms over {log.n_steps} cycles")
    print("   t      x      z   speed  thrust")
    for k in range(0, log.n_steps, 10):
        p = log.states[k, 0, 0:3]
        v = np.linalg.norm(log.states[k, 0, 3:6])
        print(f"{log.times[k]:5.2f} {p[0]:6.2f} {p[2]:6.2f} {v:6.2f} {log.inputs[k, 0, 0]:6.2f}")


if __name__ == "__main__":
    main()
