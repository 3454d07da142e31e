"""Vision-based multirotor landing on a moving platform: simulator, encoder, PPO training and evaluation."""

__version__ = "0.1.0"
