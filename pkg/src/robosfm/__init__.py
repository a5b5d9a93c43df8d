"""Social-force simulation, learned force fields, and evaluation tools
for pedestrian motion near robots."""

from robosfm.behavior import (
    BehaviorLabel,
    ClassifierParams,
    classify_step,
    classify_steps,
    classify_trajectory,
    update_goal_switch,
)
from robosfm.geometry import (
    ObstacleSet,
    Trajectory,
    TrajectoryFrame,
    Vec2,
    arc_length,
    finite_difference_velocity,
    nearest_obstacle_point,
)
from robosfm.forces import (
    ForceBreakdown,
    PedestrianAgent,
    SfmParams,
    goal_force,
    group_force,
    obstacle_repulsion,
    pedestrian_repulsion,
    robot_repulsion,
    total_force,
)
from robosfm.metrics import (
    MetricResult,
    PredictionInstance,
    SpeedHistogram,
    StatResult,
    ade,
    cliffs_delta,
    compare_providers,
    fde,
    mann_whitney_u,
    speed_histogram,
)
from robosfm.neural import (
    NetId,
    NetworkWeights,
    TrainConfig,
    TrainingSample,
    backward,
    compose_neural,
    forward,
    load_weights,
    save_weights,
    train,
)
from robosfm.preprocess import (
    FilterConfig,
    FilterReport,
    Rejection,
    passes_filters,
    repair_gaps,
    run_pipeline,
)
from robosfm.records import (
    DatasetRecord,
    RobotState,
    RobotType,
    SceneFrame,
    assemble,
    parse_records,
    write_records,
)
from robosfm.scenarios import AgentSpec, RobotSpec, Scenario, load_scenario
from robosfm.simulate import (
    AnalyticProvider,
    NeuralProvider,
    RolloutConfig,
    SimState,
    best_of_k,
    make_provider,
    predict,
    rollout,
    step,
)
from robosfm.curation import curate, synthesize, synthesize_with_scenes

__version__ = "0.1.0"
