"""
Calibrating thresholds on attack-free data
==========================================

Both detectors learn from the first 1000 samples of an attack-free run, then
set their thresholds a few percent above the largest statistic seen on the
rest of it. Replaying that run can therefore never raise an alarm.
"""

from covert_mitm import (
    DetectorParams,
    SimulationConfig,
    calibrate_detectors,
    evaluate,
    run_closed_loop,
)

cfg = SimulationConfig().attack_free()
trace = run_closed_loop(cfg)

for margin in (0.0, 0.05, 0.5):
    cal = calibrate_detectors(cfg, DetectorParams(margin=margin), trace)
    res = evaluate(trace, cal, attack_active=False)
    print(f"margin {margin:4.2f}: PASAD {cal.pasad.threshold:.3e} ({res.label_pasad}),"
          f" CUSUM {cal.cusum.threshold:.3e} ({res.label_cusum})")

# Lag, subspace dimension and numerical rank of the training matrix.
cal = calibrate_detectors(cfg, DetectorParams(), trace)
print("lag", cal.pasad.L, "dimension", cal.pasad.r, "numerical rank", cal.pasad.rank)
