"""Dataset registry: treebank codes, languages, and per-dataset quirks."""

from __future__ import annotations

# The 27 shared-task treebank codes plus the three bundled synthetic ones.
# Language is the part of the code before the first underscore.
# has_empty_nodes marks the corpora used to train the empty-node stage.
DATASETS: dict[str, dict] = {
    "ca":              {"has_empty_nodes": True},
    "cs_pcedt":        {"has_empty_nodes": True},
    "cs_pdt":          {"has_empty_nodes": True},
    "cs_pdtsc":        {"has_empty_nodes": True},
    "cu":              {"has_empty_nodes": True, "infer_max_len": 512},
    "de":              {},
    "en_fant":         {},
    "en_gum":          {},
    "en_litb":         {},
    "es":              {"has_empty_nodes": True},
    "fr_anco":         {},
    "fr_demo":         {},
    "fr_litb":         {},
    "grc":             {"has_empty_nodes": True, "infer_max_len": 512},
    "hbo":             {},
    "hi":              {},
    "hu_korkor":       {"has_empty_nodes": True},
    "hu_szegedkoref":  {"has_empty_nodes": True},
    "ko":              {},
    "la":              {},
    "lt":              {},
    "nl":              {},
    "no_bokm":         {},
    "no_nyno":         {},
    "pl":              {"has_empty_nodes": True},
    "ru":              {},
    "tr":              {"has_empty_nodes": True},
    # Synthetic corpora bundled for hermetic tests and toy experiments.
    "xa_synth":        {"has_empty_nodes": True, "synthetic": True},
    "xb_synth":        {"has_empty_nodes": True, "synthetic": True},
    "xc_synth":        {"has_empty_nodes": True, "synthetic": True},
}

CRAC_DATASETS = [d for d, info in DATASETS.items() if not info.get("synthetic")]
SYNTHETIC_DATASETS = [d for d, info in DATASETS.items() if info.get("synthetic")]


def language(dataset_id: str) -> str:
    return dataset_id.split("_")[0]


def languages(dataset_ids=None) -> list[str]:
    ids = CRAC_DATASETS if dataset_ids is None else list(dataset_ids)
    seen = []
    for d in ids:
        lang = language(d)
        if lang not in seen:
            seen.append(lang)
    return seen


def infer_max_len(dataset_id: str, default: int = 2560) -> int:
    return DATASETS.get(dataset_id, {}).get("infer_max_len", default)
