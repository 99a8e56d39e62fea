from .errors import (
    BudgetExhausted,
    ClassifierError,
    DegenerateSubproblem,
    EnvError,
    EvaluationError,
    HierarchyError,
    HierdomainError,
    ManifestError,
    OracleError,
    OracleRejection,
    PDDLError,
    PDDLSyntaxError,
    PlanningError,
    ReplayDivergence,
    SkillError,
    TaskUnsolvableInReference,
    Unsolvable,
    VocabularyMismatch,
)
from .symbolic import (
    Action,
    DomainModel,
    EffectSet,
    Goal,
    GroundAtom,
    Literal,
    OperatorDef,
    PredicateKind,
    PredicateSchema,
    Problem,
    SymbolicState,
    applicable,
    apply,
    goal_satisfied,
    normalize_name,
    state_diff,
)
from .pddl import (
    format_plan,
    parse_domain,
    parse_operator,
    parse_plan,
    parse_predicate,
    parse_problem,
    print_domain,
    print_problem,
)
from .planner import (
    Plan,
    ValidationTrace,
    joint_effects,
    search_plan,
    validate_plan,
)
from .skills import (
    SkillCall,
    SkillLibrary,
    SkillSignature,
    parse_skill_call,
)
from .classifier import (
    ClassifierProgram,
    ClassifierRegistry,
    eval_classifier,
    parse_classifier,
)
from .dataset import (
    Transition,
    TransitionDataset,
    pseudo_label,
)
from .config import (
    Budgets,
    LearnerConfig,
    LiveEndpoint,
    SearchConfig,
)
from .refinement import (
    RefineDecision,
    f1_scores,
    optimize_hypers,
    refine_all,
    refine_decision,
)
from .verification import (
    FailureReport,
    FixType,
    RecoveryDecision,
    verify_leaf,
)
from .oracle import (
    LiveOracle,
    Oracle,
    OracleRole,
    ReplayOracle,
    ScriptedOracle,
)
from .hierarchy import (
    HierarchyLearner,
    HierarchyNode,
    check_alignment,
    classify_mismatch,
    make_subproblem,
    realign_operator,
)
from .evaluation import (
    EWConfig,
    EWReport,
    ew_score,
    harmonic_mean,
)
from .manifest import (
    Manifest,
)
from .learning import (
    RunReport,
    run_learning,
)
from .utils import (
    read_jsonl,
)
