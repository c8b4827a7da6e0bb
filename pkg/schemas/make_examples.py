"""Regenerate the example input files in this directory."""

import json, numpy as np
from pathlib import Path
from qopers.numkernel import Polynomial
from qopers.qoper import ScalarQOper
from qopers.connection import HyperGeoBParams
from qopers import bethe_gl2 as g2, bethe_gln as gn, cl_limit as cl
from qopers.cli import dump_json
out = Path(__file__).resolve().parent
q = 0.5
a = 2
L = ScalarQOper(q, (Polynomial([-1, 1]), Polynomial([-1, q**a])))
(out / "integer_a_oper.json").write_text(dump_json(L.to_json()))
(out / "points.json").write_text(dump_json({"points": [0.3 + 0.2j, 2.5 - 1j, -0.7j, 3.3 + 0.4j]}))
(out / "empty_points.json").write_text(dump_json({"points": []}))
p = HyperGeoBParams(0.5 + 0.1j, 1.3 + 0.2j, 0.7 + 0.1j, -1.9 + 0.4j, 2.1 - 0.3j, 0.4 + 0.9j)
(out / "hypergeometric_N0.json").write_text(dump_json(p.to_json()))
rng = np.random.default_rng(0)
P = g2.ToroidalParams.random(rng)
(out / "toroidal_params.json").write_text(dump_json(P.to_json(seed=0)))
rng = np.random.default_rng(7)
D = gn.GlnBetheData.random(3, [1, 1, 1], rng)
D = gn.solve_colors(D, range(3), rng)
(out / "gln_n3.json").write_text(dump_json(D.to_json()))
(out / "gln_count.json").write_text(dump_json({"n": 3, "l0": 1, "degF": [0, 1]}))
rng = np.random.default_rng(3)
fam = cl.force_nolog(cl.LimitFamily.random(2, rng))
(out / "limit_family_nolog.json").write_text(dump_json(fam.to_json()))
rng = np.random.default_rng(5)
u = g2.random_unfolded_instance(rng, 2, 1)
(out / "unfolded.json").write_text(dump_json(u.to_json()))
