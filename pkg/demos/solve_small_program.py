"""Build and solve a tiny cone program by hand.

Minimizes the Euclidean distance from the point (3, 4) to the line
x0 = x1, written as: min t  s.t.  ||v|| <= t,  v = x - (3, 4),  x0 = x1.
The answer is the distance from (3,4) to the diagonal, |3-4|/sqrt(2).
"""

import math

import numpy as np

from socprune import ProgramBuilder, QUADRATIC, SolverSettings, kkt_residuals, solve


def main():
    builder = ProgramBuilder()
    t = builder.add_variable()
    v = builder.add_variables(2)
    x = builder.add_variables(2)
    builder.mark_free(x)
    builder.add_cone(QUADRATIC, [t, v[0], v[1]])
    for i, a in enumerate((3.0, 4.0)):
        builder.add_equality([v[i], x[i]], [1.0, -1.0], -a)
    builder.add_equality([x[0], x[1]], [1.0, -1.0], 0.0)
    builder.set_objective(t, 1.0)
    program = builder.build()

    print(f"program: {program.num_vars} variables, {program.num_eqs} equalities")
    sol = solve(program, SolverSettings(verbose=True))
    print(f"status={sol.status} after {sol.iterations} iterations")

    distance = sol.x[t]
    point = sol.x[x[0]], sol.x[x[1]]
    print(f"distance  = {distance:.12f}")
    print(f"expected  = {abs(3.0 - 4.0) / math.sqrt(2):.12f}")
    print(f"foot      = ({point[0]:.6f}, {point[1]:.6f})  (expect (3.5, 3.5))")

    gap, pres, dres = kkt_residuals(program, sol)
    print(f"recomputed residuals: gap={gap:.2e} primal={pres:.2e} dual={dres:.2e}")


if __name__ == "__main__":
    main()
