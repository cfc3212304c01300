"""Candidate recall and size over a grid of eta and theta values.

    python scripts/coverage_sweep.py --docs 2000 --labels 200 > sweep.tsv
"""

import argparse

import numpy as np

from coderank.aux_retrieval import build_aux_index, coverage_report, retrieve_candidates_aux
from coderank.bm25 import Bm25Params, build_bm25_index, filter_bm25
from coderank.pipeline import calibrate_theta
from coderank.synthetic import generate_synthetic_corpus

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--docs", type=int, default=2000)
    ap.add_argument("--labels", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--split", default="test")
    ap.add_argument("--etas", type=float, nargs="+", default=[0.0, 0.005, 0.02, 0.05, 0.1, 0.2])
    ap.add_argument("--thetas", type=float, nargs="+", default=None)
    args = ap.parse_args()

    corpus = generate_synthetic_corpus(args.seed, args.docs, args.labels)
    aux = build_aux_index(corpus.docs("train"))
    bm = build_bm25_index(corpus.labels)
    docs = corpus.docs(args.split)

    valid = corpus.docs("valid")
    cal = calibrate_theta(valid, [retrieve_candidates_aux(d, aux) for d in valid], bm)
    thetas = args.thetas or sorted({0.0, 2.0, 4.0, round(cal, 3), 6.0, 8.0, 200.0})
    print(f"# calibrated theta on valid: {cal:.4f}")
    print("eta\ttheta\taux_recall\taux_size\tbm25_recall\tbm25_size")
    for eta in args.etas:
        aux_sets = [retrieve_candidates_aux(d, aux, eta) for d in docs]
        a = coverage_report(aux_sets, docs)
        for t in thetas:
            kept = [filter_bm25(d, c, bm, Bm25Params(theta=t)) for d, c in zip(docs, aux_sets)]
            b = coverage_report(kept, docs)
            print(f"{eta:g}\t{t:g}\t{a.recall:.4f}\t{a.mean_size:.1f}\t{b.recall:.4f}\t{b.mean_size:.1f}")
    sizes = np.array([len(c.labels) for c in aux_sets])
    print(f"# last eta: aux size quartiles {np.percentile(sizes, [25, 50, 75]).tolist()}")
