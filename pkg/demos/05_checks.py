"""
Built-in checks
===============

The package carries its own consistency suites: closed-form special cases,
agreement between independent formulas, and agreement with simulation.
They are what ``phasehit verify`` runs.
"""

from phasehit import load_model
from phasehit.validation import SUITES, run_suite

model = load_model("example_s5")
for suite in SUITES:
    print(f"-- {suite}")
    for check in run_suite(suite, model, budget=20_000, seed=1):
        status = "pass" if check.passed else "FAIL"
        print(f"   {status}  {check.name:45s} {check.measured:.3g} <= {check.tolerance:g}")
