"""Regenerate tests/data/metric_oracle.json from sacrebleu.

Run from the repository root:

    pip install sacrebleu
    python tests/oracles/make_metric_oracle.py

sacrebleu is only used here and in the optional live cross-check; the
package never imports it.
"""

import json
import sys
from pathlib import Path

import sacrebleu
from sacrebleu.metrics import BLEU, CHRF

DATA = Path(__file__).resolve().parents[1] / "data"


def main():
    pairs = [line.split("\t") for line in (DATA / "metric_fixture.tsv").read_text(encoding="utf-8").splitlines()]
    hyps = [h for h, _ in pairs]
    refs = [r for _, r in pairs]
    # uniform mean of per-order F-beta, character orders 1..6, no word n-grams
    chrf = CHRF(char_order=6, word_order=0, beta=2, eps_smoothing=True)
    sbleu = BLEU(smooth_method="add-k", smooth_value=1, effective_order=True)
    oracle = {
        "generator": f"sacrebleu {sacrebleu.__version__}",
        "corpus_bleu": BLEU(tokenize="13a").corpus_score(hyps, [refs]).score,
        "sentence_chrf": [chrf.sentence_score(h, [r]).score / 100 for h, r in pairs],
        "sentence_bleu_add1": [sbleu.sentence_score(h, [r]).score / 100 for h, r in pairs],
        "chrf_kocka": chrf.sentence_score("kočka sedí", ["kočka spí"]).score / 100,
    }
    out = DATA / "metric_oracle.json"
    out.write_text(json.dumps(oracle, indent=1) + "\n", encoding="utf-8")
    print(f"wrote {out}", file=sys.stderr)


if __name__ == "__main__":
    main()
