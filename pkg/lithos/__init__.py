from lithos.config import RunConfig, dump_config, load_config
from lithos.data import Corpus, Sample, generate_synthetic, scan_corpus, stratified_split
from lithos.errors import LithosError
from lithos.explain import SaliencyMap, explain, pointing_game, rotation_stability
from lithos.runtime import Runtime
from lithos.tensor import Tape, Tensor
from lithos.train import TrainConfig, evaluate, train
from lithos.zoo import Model, ModelSpec, build_model, load_checkpoint, save_checkpoint

__all__ = [
    "Corpus",
    "LithosError",
    "Model",
    "ModelSpec",
    "RunConfig",
    "Runtime",
    "SaliencyMap",
    "Sample",
    "Tape",
    "Tensor",
    "TrainConfig",
    "build_model",
    "dump_config",
    "evaluate",
    "explain",
    "generate_synthetic",
    "load_checkpoint",
    "load_config",
    "pointing_game",
    "rotation_stability",
    "save_checkpoint",
    "scan_corpus",
    "stratified_split",
    "train",
]
