"""Score-report rendering: fixed-order text tables plus JSON round-trip."""

from __future__ import annotations

import json

from . import text as _text
from . import nav as _nav

TEXT_COLUMNS = ("BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4",
                "ROUGE", "METEOR", "CIDEr", "Sentence")
ABSENT = "—"  # em dash placeholder for metrics that did not run


def score_text(pairs, embedding_provider=None, sentence: bool = True) -> dict:
    """Compute the full text-metric row for one system."""
    bleu = _text.bleu_corpus(pairs)
    out = {
        "bleu": {str(n): bleu[n] for n in sorted(bleu)},
        "rouge_l": _text.rouge_l(pairs),
        "meteor": _text.meteor(pairs),
    }
    try:
        out["cider"] = _text.cider(pairs)
    except _text.MetricError:
        out["cider"] = None
    if sentence:
        emb = _text.embedding_similarity(pairs, provider=embedding_provider)
        if emb["score"] is not None:
            out["sentence_similarity"] = emb["score"]
            out["sentence_provider"] = emb["provider"]
    return out


def _cell(value, scale: float) -> str:
    if value is None:
        return ABSENT
    return f"{value * scale:.2f}"


def _row_cells(scores: dict) -> list[str]:
    bleu = scores.get("bleu", {})
    return [
        _cell(bleu.get("1"), 100.0),
        _cell(bleu.get("2"), 100.0),
        _cell(bleu.get("3"), 100.0),
        _cell(bleu.get("4"), 100.0),
        _cell(scores.get("rouge_l"), 100.0),
        _cell(scores.get("meteor"), 100.0),
        _cell(scores.get("cider"), 10.0),  # already on a 0..10 scale
        _cell(scores.get("sentence_similarity"), 100.0),
    ]


def render_text_table(rows: dict[str, dict]) -> str:
    """rows: system name -> score_text() dict."""
    header = ["System", *TEXT_COLUMNS]
    body = [[name, *_row_cells(scores)] for name, scores in rows.items()]
    widths = [max(len(str(r[i])) for r in [header, *body]) for i in range(len(header))]
    lines = []
    lines.append("  ".join(h.ljust(widths[i]) for i, h in enumerate(header)))
    lines.append("  ".join("-" * w for w in widths))
    for r in body:
        lines.append("  ".join(str(c).ljust(widths[i]) for i, c in enumerate(r)))
    return "\n".join(lines)


def render_nav_table(metrics: dict) -> str:
    header = ["Split", "Count", "SR", "SPL", "NE (m)"]
    body = []
    for split in ("short", "long", "mean"):
        st = metrics[split]
        body.append([
            split.capitalize(),
            str(st["count"]),
            _cell(st["sr"], 100.0),
            _cell(st["spl"], 100.0),
            ABSENT if st["ne"] is None else f"{st['ne']:.2f}",
        ])
    widths = [max(len(str(r[i])) for r in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(header))]
    lines.append("  ".join("-" * w for w in widths))
    for r in body:
        lines.append("  ".join(str(c).ljust(widths[i]) for i, c in enumerate(r)))
    return "\n".join(lines)


def save_report(path: str, report: dict) -> None:
    with open(path, "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")


def load_report(path: str) -> dict:
    with open(path) as f:
        return json.load(f)


def nav_report(results: list[_nav.EpisodeResult]) -> dict:
    metrics = _nav.nav_metrics(results)
    return {
        "episodes": [
            {
                "episode_id": r.episode_id,
                "success": r.success,
                "spl": r.spl,
                "nav_error": r.nav_error,
                "shortest_path_length": r.shortest_path_length,
                "traveled_length": r.traveled_length,
                "bucket": r.bucket,
            }
            for r in results
        ],
        "summary": metrics,
    }
