"""Numerical toolkit for Haantjes-geometric structures of Hamiltonian systems.

Library layout:

* ``expr`` / ``jets`` - expression language and second-order forward jets.
* ``geometry``        - charts, fields, torsions, symplectic calculus,
                        chart transitions.
* ``algebra``         - operator-algebra axioms, spectra, diagonalisation.
* ``chains``          - chain equations, separable involution, operator fits,
                        separation-equation residuals.
* ``lift``            - lift of plane operators to phase space.
* ``catalog``         - built-in systems with machine-checkable manifests,
                        plus a plain-text system-definition loader.
* ``cli``             - command-line front end with JSON reports.
"""

__version__ = "0.1.0"
