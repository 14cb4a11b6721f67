"""Free-space electromagnetic constants (SI).

``EPS0`` is derived from ``MU0`` and ``C0`` so that ``C0 == 1/sqrt(EPS0*MU0)``
holds to machine precision, which downstream retarded-time arithmetic relies on.
"""

C0 = 299792458.0            # speed of light in vacuum, m/s
MU0 = 1.25663706212e-06     # vacuum permeability, H/m (CODATA 2018)
EPS0 = 1.0 / (MU0 * C0 * C0)  # vacuum permittivity, F/m
