from .metamodels import (KRIGING, MLS, PLS, FittedMetamodel, MetamodelKind, TrainMatrix,
                         fit_metamodel, predict)
from .stats import cop_score, correlation_coefficient
from .train import (CopMatrix, MopModel, SignificanceReport, TargetModel, cop, cop_matrix,
                    load_model, model_fingerprint, save_model, serialize_model,
                    significance_subsets, train_mop)
