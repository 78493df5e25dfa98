"""Builders for valid rubric-verdict JSON documents used across tests."""

from __future__ import annotations


def rep_skeleton() -> dict:
    return {
        "Response Completeness": {"score": 0, "Missing Items": [], "comments": ""},
        "Lesion Condition Description": {
            "score": 0,
            "Feature Extraction Accuracy Rate": "",
            "Terminology Standardization": 0,
            "comments": "",
        },
        "Lesion-Indicated Pathomechanism": {
            "score": 0,
            "Pathomechanism Accuracy": 0,
            "Reasoning Consistency": 0,
            "comments": "",
        },
        "Stage2 Total Score": 0,
        "Maximum Score": 25,
    }


def reason_skeleton() -> dict:
    return {
        "Response Completeness": {
            "score": 0,
            "Number of Items Actually Answered": 0,
            "Missing Items": [],
        },
        "Etiology and Pathomechanism Analysis": {
            "score": 0, "Evidence Extraction": 0, "RAG Alignment": 0, "Logical Coherence": 0,
        },
        "Syndrome Differentiation": {
            "score": 0, "Syndrome Accuracy": 0, "Diagnostic Specificity": 0,
        },
        "Treatment Method": {
            "score": 0, "Therapeutic Principle Targeting": 0, "Terminology Professionalism": 0,
        },
        "Formula and Prescription": {
            "score": 0,
            "Formula Name Match": 0,
            "Herb Matching Score": 0,
            "Number of Identical Herbs": 0,
            "Total Herbs in Label Prescription": 0,
            "Identical Herb List": [],
            "Matching Rate": "0%",
            "Compatibility Logic": 0,
        },
        "Total Score": 0,
        "Maximum Score": 45,
        "Overall Comments": "",
    }


def reason_doc(
    *,
    answered: int = 5,
    patho: float = 8.0,
    syndrome: float = 7.0,
    treatment: float = 6.0,
    name_match: float = 2.0,
    herb: float = 3.5,
    identical: int = 1,
    label_total: int = 2,
    identical_list: tuple[str, ...] = ("Sheng Di Huang",),
    rate: str = "50%",
    compat: float = 1.0,
) -> dict:
    doc = reason_skeleton()
    completeness = answered / 5 * 5
    formula = name_match + herb + compat
    doc["Response Completeness"].update(
        {"score": completeness, "Number of Items Actually Answered": answered}
    )
    doc["Etiology and Pathomechanism Analysis"].update(
        {"score": patho, "Evidence Extraction": 4, "RAG Alignment": 2, "Logical Coherence": 2}
    )
    doc["Syndrome Differentiation"].update(
        {"score": syndrome, "Syndrome Accuracy": 4, "Diagnostic Specificity": 3}
    )
    doc["Treatment Method"].update(
        {"score": treatment, "Therapeutic Principle Targeting": 4,
         "Terminology Professionalism": 2}
    )
    doc["Formula and Prescription"].update(
        {
            "score": formula,
            "Formula Name Match": name_match,
            "Herb Matching Score": herb,
            "Number of Identical Herbs": identical,
            "Total Herbs in Label Prescription": label_total,
            "Identical Herb List": list(identical_list),
            "Matching Rate": rate,
            "Compatibility Logic": compat,
        }
    )
    doc["Total Score"] = completeness + patho + syndrome + treatment + formula
    return doc

def rep_doc(
    *,
    completeness: float = 5.0,
    lesion: float = 8.0,
    terminology: float = 4.0,
    patho: float = 7.0,
    accuracy: float = 4.0,
    consistency: float = 3.0,
) -> dict:
    doc = rep_skeleton()
    doc["Response Completeness"]["score"] = completeness
    doc["Lesion Condition Description"].update(
        {"score": lesion, "Terminology Standardization": terminology}
    )
    doc["Lesion-Indicated Pathomechanism"].update(
        {"score": patho, "Pathomechanism Accuracy": accuracy,
         "Reasoning Consistency": consistency}
    )
    doc["Stage2 Total Score"] = completeness + lesion + patho
    return doc
