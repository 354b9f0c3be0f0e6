#!/usr/bin/env python3
"""How the optimized sounding dimension reacts to power and mobility.

Sweeps the training power and user speed at a fixed frame and reports the
optimized number of distinct sounding directions n_d* together with the
envelope-predicted NMSE: more power or less mobility pushes the design to
sample a broader subspace.
"""

import argparse

import numpy as np

from pilotseq import channel_model as cm
from pilotseq import sequence_design as sd
from pilotseq import steady_state as ss
from pilotseq import simulate as sim


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-t", type=int, default=64)
    ap.add_argument("--g", type=int, default=32)
    ap.add_argument("--m-p", type=int, default=1)
    ap.add_argument("--d-s", type=float, default=150.0)
    ap.add_argument("--snr-db", nargs="*", type=float,
                    default=[-10, -5, 0, 5, 10, 15, 20])
    ap.add_argument("--v-kmh", nargs="*", type=float, default=[3.0, 30.0])
    args = ap.parse_args()

    print(f"{'SNR dB':>7} " + "".join(
        f"  v={v:g}km/h: n_d*, NMSE  " for v in args.v_kmh))
    for snr in args.snr_db:
        cells = [f"{snr:7.1f}"]
        for v in args.v_kmh:
            ring = cm.OneRingGeometry(d_s=args.d_s, d_r=30.0, h=60.0,
                                      theta_h=np.pi / 6, v=v / 3.6)
            block_len = 5
            scene = sim.build_scene(cm.ArrayGeometry.ula(args.n_t), ring,
                                    block_len)
            rho = 10.0 ** (snr / 10.0) / scene.gamma
            frame = sd.FrameParams(g_len=args.g, m_p=args.m_p, m=5,
                                   n_d_max=args.g * args.m_p, rho=rho)
            lam = scene.lam_sim[: scene.r_design]
            asn = sd.min_max_design(lam, scene.a, rho, frame)
            prof = ss.profile(scene.lam_sim, scene.a, rho,
                              sim._pad_g(asn, scene.r_sim))
            nmse = prof.upper_sum() / scene.trace()
            cells.append(f"   {asn.n_d:3d}, {nmse:7.4f}      ")
        print("".join(cells))


if __name__ == "__main__":
    main()
