"""Optimized LTAT of NOMA and OMA at K=4 over transmit SNR (rates optimized, beta2 fixed)."""
from coopnoma import NetworkConfig, OmaConfig
from coopnoma.optimize import OutageConstraints, maximize_ltat_rates

cons = OutageConstraints(0.01, 0.01)
print("snr_db,noma,oma,ratio")
for snr in range(0, 70, 10):
    n = maximize_ltat_rates(NetworkConfig(k_max=4, beta2=0.3).replace(snr_db=snr), cons)
    o = maximize_ltat_rates(OmaConfig(k_max=4, beta2=0.3).replace(snr_db=snr), cons, scheme="oma")
    ratio = n.objective / o.objective if n.feasible and o.feasible else float("nan")
    print(f"{snr},{n.objective:.6g},{o.objective:.6g},{ratio:.4g}")
