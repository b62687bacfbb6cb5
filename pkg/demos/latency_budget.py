"""Beam selection time with twin lookup tables versus a full 34-beam sweep.

    python demos/latency_budget.py
"""

from multiverse import (CommCostModel, LatencyBudget, comm_cost, downlink_ms,
                        improvement_vs_exhaustive, multiverse_latency)

# a 200 x 34 float32 table without ray counts, over the 5 GHz control link
table_ms = downlink_ms(200 * 34 * 4)
print(f"table downlink: {table_ms:.4f} ms")

budget = LatencyBudget(downlink_ms=0.1292, solve_ms=0.023, sweep=CommCostModel(),
                       exhaustive_ms=1.27)
print(" K  latency_ms  improvement_%")
for K in (1, 2, 4, 8, 12, 20, 34):
    lat = multiverse_latency(budget, K)
    print(f"{K:2d}  {lat:10.4f}  {improvement_vs_exhaustive(lat, budget.exhaustive_ms):13.2f}")

nr = CommCostModel("nr5g")
print("NR SS-burst sweep:", {K: comm_cost(nr, K) for K in (1, 32, 33, 64, 65)}, "ms")
