"""
Two-measure Sobolev-Poincare with a Dirac mass
==============================================

With nu a point mass, Theta = 1 and Psi = r^2 the volume test T1 stays
bounded on square lattices while the inequality T2 degrades as the
lattice grows.  On a path the walk dimension exceeds the volume
exponent and both stay bounded, which is the Morrey regime.
"""
from hkelab.conditions import BorelMeasure, ScaleFunction, morrey_check, sp_T1, sp_T2
from hkelab.conditions.poincare import dirac_theta_morrey
from hkelab.space import build_lattice2d, build_path

psi = ScaleFunction.power(2.0)
one = ScaleFunction.constant(1.0)

print("lattice2d, Theta = 1")
for n in (8, 16, 32):
    g = build_lattice2d(n)
    nu = BorelMeasure.dirac(g.n, (n // 2) * n + n // 2)
    K = sp_T1(g, nu, one, psi).constants["K"]
    C = sp_T2(g, nu, one).constants["C"]
    print(f"  n={n:3d}  T1 K={K:.3f}  T2 C={C:.3f}")

print("path, Theta = (Psi/mu(B))^(1/2)")
for n in (16, 32, 64):
    g = build_path(n)
    nu = BorelMeasure.dirac(g.n, n // 2)
    theta = dirac_theta_morrey(g, psi)
    K = sp_T1(g, nu, theta, psi).constants["K"]
    C = sp_T2(g, nu, theta).constants["C"]
    print(f"  n={n:3d}  T1 K={K:.3f}  T2 C={C:.3f}")

print("Morrey constant on path(64):", round(morrey_check(build_path(64), psi).constants["C"], 4))
