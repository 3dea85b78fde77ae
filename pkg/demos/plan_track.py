"""Point-mass planning on the six-waypoint track.

Runs both velocity-search passes for each vehicle, prints the chosen
waypoint velocities and arrival times, and the first instant at which the
two point-mass plans come within the collision tolerance.

    python3 demos/plan_track.py
"""

import numpy as np

from pmpc.scenario_io import load_scenario, resolve_scenario
from pmpc.velocity_search import first_collision_time, plan_two_step


def main():
    sc = load_scenario(resolve_scenario("table2_track"))
    plans = []
    for j, quad in enumerate(sc.quads):
        route = sc.route(j)
        plan, t1, t2 = plan_two_step((quad.initial.position, quad.initial.velocity),
                                     [w.position_at(0.0) for w in route], sc.planner)
        plans.append(plan)
        print(f"quad {j}: coarse pass {t1:.3f} s, cone refinement {t2:.3f} s")
        for i, (v, t) in enumerate(zip(plan.velocities, plan.arrival_times)):
            print(f"  waypoint {i + 1}: t = {t:6.3f} s  v = {np.round(v, 2)}  |v| = {np.linalg.norm(v):5.2f} m/s")
    tc = first_collision_time(plans[0], plans[1], sc.params.downwash, sc.params.collision_tolerance, sc.solver.dt)
    print("point-mass conflict:", "none" if tc is None else f"at t = {tc:.2f} s")


if __name__ == "__main__":
    main()
