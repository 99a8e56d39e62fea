from enum import Enum


class OracleRole(Enum):
    DOMAIN = "Domain"
    PLAN_FALLBACK = "PlanFallback"
    TRANSLATE = "Translate"
    DECOMPOSE = "Decompose"
    REASONER = "Reasoner"
    CLASSIFIER_GEN = "ClassifierGen"
    CLASSIFIER_REFINE = "ClassifierRefine"
    PSEUDO_LABEL = "PseudoLabel"
