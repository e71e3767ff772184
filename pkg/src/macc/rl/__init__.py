"""Q-networks, replay memory, exploration and TD / VDN learning."""

from .learner import ExplorationSchedule, joint_td_loss, select_action, td_update, vdn_joint_q, vdn_update
from .network import QNetwork, forward
from .persistence import load_model, load_or_initialize, save_model
from .replay import Batch, Experience, NotReady, ReplayMemory, push, sample

__all__ = [
    "QNetwork", "forward", "Experience", "Batch", "ReplayMemory", "NotReady", "push", "sample",
    "ExplorationSchedule", "select_action", "td_update", "vdn_update", "vdn_joint_q", "joint_td_loss",
    "save_model", "load_model", "load_or_initialize",
]
