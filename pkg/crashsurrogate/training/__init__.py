from crashsurrogate.training.config import TrainConfig, load_train_config
from crashsurrogate.training.loss import position_loss
from crashsurrogate.training.train import train, TrainResult
