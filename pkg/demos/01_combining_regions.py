"""Combining regions: detailed ledgers, coefficients and interpolation.

Two neighbouring regions trade with each other.  When they are merged, that
trade stops being "inflow from another region" and becomes ordinary
intra-regional input, yet the merged table is still the plain sum of the two
members' tables.  Input coefficients, on the other hand, are ratios, so they
survive scaling untouched and a mixture of regions lands between its
members.

Run:  python demos/01_combining_regions.py
"""
import numpy as np

from iomix.iodata import (
    INDUSTRIES,
    DetailedRegionalFlows,
    coefficient_matrix,
    compose_detailed,
    linear_interpolate,
    scale_region,
)
from iomix.synthetic import make_world

np.set_printoptions(precision=4, suppress=True)
n = len(INDUSTRIES.sectors)

# --- A two-region economy written out by hand ---------------------------
# Region "north" buys 6 units of sector-1 goods from "south" for use in
# sector 3; "south" records the same 6 units as shipped north.
zeros_m, zeros_v = np.zeros((n, n)), np.zeros(n)


def ledger(rid, partner, bought, shipped, own):
    m_hat = zeros_m.copy()
    m_hat[0, 2] = own
    m_dot = {partner: bought} if bought is not None else {}
    Y = np.full(n, 40.0)
    draft = DetailedRegionalFlows(rid, m_hat, zeros_m, Y, m_dot=m_dot, f_own=zeros_v,
                                  shipping={partner: shipped}, exports=zeros_v, imports=zeros_v)
    # close the balance with exports so each ledger is internally consistent
    return DetailedRegionalFlows(rid, m_hat, zeros_m, Y, m_dot=m_dot, f_own=zeros_v,
                                 shipping={partner: shipped}, exports=draft.balance_residual(), imports=zeros_v)


bought = zeros_m.copy()
bought[0, 2] = 6.0
north = ledger("north", "south", bought, zeros_v, own=10.0)
shipped = zeros_v.copy()
shipped[0] = 6.0
south = ledger("south", "north", None, shipped, own=4.0)

merged, table = compose_detailed([north, south])
print("sector 1 -> sector 3 input")
print("  north alone, own region only :", north.m_hat[0, 2])
print("  north alone, all origins      :", north.io_table().A[0, 2])
print("  south alone                   :", south.io_table().A[0, 2])
print("  merged region                 :", table.A[0, 2], "(the 6 traded units are now local)")
print("  merged m_hat                  :", merged.m_hat[0, 2])
assert np.allclose(table.A, north.io_table().A + south.io_table().A)

# --- Coefficients are size free -----------------------------------------
world = make_world(seed=7)
pref = world.pool[0]
a = coefficient_matrix(pref.io)
doubled = coefficient_matrix(scale_region(pref, 2.0).io)
print("\nlargest coefficient change after doubling", pref.region_id, ":", np.abs(doubled - a).max())

# --- A 30/70 blend sits between its members -----------------------------
p, q = world.pool[1], world.pool[2]
blend = coefficient_matrix(linear_interpolate([p, q], [0.3, 0.7]).io)
ap, aq = coefficient_matrix(p.io), coefficient_matrix(q.io)
inside = (blend >= np.minimum(ap, aq) - 1e-15) & (blend <= np.maximum(ap, aq) + 1e-15)
print(f"blend of {p.region_id} and {q.region_id}: {inside.sum()} of {inside.size} coefficients between the members")
print("a_{1,1}:", ap[0, 0], "|", aq[0, 0], "-> blend", blend[0, 0])
