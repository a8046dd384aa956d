"""Toolkit for learning, describing, and teaching bounded rules about when
a human should rely on an AI assistant."""

from .dataset import (DatasetManifest, LossSpec, StudyDataset, TaskExample,
                      decision_loss, joint_vector, load_dataset, loads_dataset,
                      normalize_dataset, normalize_vector, optimal_decision,
                      save_dataset, team_loss)
from .errors import (BackendError, DatasetFormatError, ParseError, SchemaError,
                     TeamRulesError, ValidationError)
from .regions import (Integrator, PriorRule, Region, integrate, load_regions,
                      region_contains, region_gain, save_regions)
from .gradient_discovery import (DiscoveryConfig, DiscoveryResult, RegionParams,
                                 adam_step, discover, gain_vector, kmedoids_init,
                                 objective_gradient, objective_value,
                                 optimize_region)
from .selection_discovery import (SelectionConfig, aggregate_regions,
                                  discover_select, grow_region_at)
from .describe import (BagOfWordsEmbedder, DescriberConfig, DescriptionTrace,
                       HTTPEmbedder, HTTPLLMClient, KeywordMockLLM, LLMClient,
                       LookupEmbedder, ScriptedLLM, TextEmbedder, build_prompt,
                       cosine_similarity, describe_region, find_counterexamples)
from .synth import (GroundTruth, PlantSpec, combined_cluster_labels,
                    generate_blobs, plant_regions, simulate_responses)
from .evaluation import (EvalReport, adjusted_rand_index, fowlkes_mallows,
                         kmeans_baseline_labels, region_cluster_labels,
                         resplit, score_descriptions, sentence_similarity_score,
                         splits_summary, team_error_report)
from .estimators import RegionDiscovery, SelectionDiscovery, prior_from_name
from .sessions import (AlreadyAnswered, HumanAICard, Lesson, OnboardingSession,
                       SessionDone, build_card, card_from_file,
                       recommend_vector, replay_transcript)
from .service import create_app
from .cli import main, run_command

__version__ = "0.1.0"
