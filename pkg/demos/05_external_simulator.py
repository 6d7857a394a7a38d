"""
Driving a simulator in another process
======================================

Any program that reads and writes one JSON object per line can serve as a
simulator. ``external/toy_child.py`` is a minimal example; the same run
can be launched from the command line with
``synlik run demos/external/bsl_external.yaml``.
"""

import sys
from pathlib import Path

from synlik import BslTarget, ExternalSimulator, ExternalSimulatorSpec, Normal, Prior, ProposalConfig
from synlik import SeedStream, diagnostics, run_chain

child = Path(__file__).with_name("external") / "toy_child.py"
spec = ExternalSimulatorSpec([sys.executable, str(child)], d_theta=1, d_s=1, n=100, timeout=10)
prior = Prior((Normal(0.0, 1.0),))

with ExternalSimulator(spec, prior) as sim:
    # the seed travels with the request, so the child is reproducible
    print("one summary:", sim.simulate([0.3], 42), sim.simulate([0.3], 42))
    trace = run_chain(None, 1000, 200, BslTarget(sim, [0.3], 20), prior, ProposalConfig((0.15,)), SeedStream(5))

d = diagnostics(trace)
print(f"posterior mean {d.mean[0]:.3f} +/- {d.mcse[0]:.3f}, sd {d.sd[0]:.3f}, {trace.simulations} child simulations")
