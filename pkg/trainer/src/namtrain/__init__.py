from .data import Dataset, DatasetMissingError, load, load_breast_cancer, load_csv
from .export import export_model, model_json
from .train import AdditiveModel, TrainConfig, TrainingDivergedError, train, train_and_export

__version__ = "0.1.0"
