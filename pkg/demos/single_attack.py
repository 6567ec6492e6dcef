"""
A covert change-of-reference attack, step by step
==================================================

The plant output is driven from 0.5 to 0.5 + gamma_ref while the controller
keeps seeing 0.5. With a slightly wrong plant model the attacker leaks a
small residual, and that residual is what the detectors have to find.
"""

from dataclasses import replace

import numpy as np

from covert_mitm import SimulationConfig, run_closed_loop, run_single

# A perfect model hides everything: the manipulated measurement matches an
# attack-free run to rounding error while the real output moves by 0.25.
clean = replace(SimulationConfig(), noise_power=0.0, gamma_ref=0.25)
hidden = run_closed_loop(replace(clean, alpha=1.0))
baseline = run_closed_loop(clean.attack_free())
print("plant output at the end:", hidden.y[-1])
print("largest change seen by the controller:", np.max(np.abs(hidden.y_ma - baseline.y_ma)))

# The default scenario: +0.5 offset, 5 % gain error, measurement noise.
trace, result, calibration = run_single(SimulationConfig())
print("PASAD threshold %.3g, max %.3g, alarm after %s samples"
      % (calibration.pasad.threshold, result.pasad_max, result.detection_delay_pasad))
print("CUSUM threshold %.3g, max %.3g, alarm after %s samples"
      % (calibration.cusum.threshold, result.cusum_max, result.detection_delay_cusum))

# What leaks is the model error times the attacker's own plant response.
start = trace.config.attack_start
window = slice(start - 5, start + 40, 5)
for t, y, y_ma in zip(trace.t_hours[window], trace.y[window], trace.y_ma[window]):
    print(f"t={t:6.1f} h  y={y:.4f}  y_ma={y_ma:.4f}")
