"""Scikit-learn-style front door: fit on scenes, predict multimodal futures.

GohomePredictor wraps model construction, the training schedule and the
prediction pipeline behind fit/predict with get_params/set_params, so runs
can be configured the way sklearn estimators are.  The lower-level pieces
(GohomeModel, train, predict_scene) stay available for surgical use.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator

from .exceptions import ConfigError, SceneInputError
from .metrics import MetricReport, ScenePrediction, evaluate
from .model import GohomeModel, load_model, predict_scene, save_model
from .scenes import Scene
from .training import TrainConfig, train, validation_metrics


def check_scenes(scenes) -> list[Scene]:
    """Validate a scene collection: non-empty, Scene-typed, one horizon."""
    scenes = list(scenes)
    if not scenes:
        raise SceneInputError("expected at least one scene")
    for i, s in enumerate(scenes):
        if not isinstance(s, Scene):
            raise SceneInputError(f"item {i} is {type(s).__name__}, not Scene")
    h0 = scenes[0].horizon
    for s in scenes[1:]:
        if s.horizon != h0:
            raise SceneInputError(
                f"scene {s.scene_id} horizon {s.horizon} differs from {h0}"
            )
    return scenes


class GohomePredictor(BaseEstimator):
    """Lane-graph heatmap predictor with the sklearn estimator surface.

    Parameters mirror TrainConfig plus the model size knobs; they are stored
    verbatim at construction and validated at fit time, so get_params,
    set_params, and sklearn.base.clone behave as usual.  After fit, the
    trained network lives in ``model_`` and per-epoch records in
    ``history_``.
    """

    def __init__(self, channels: int = 64, resolution: float = 0.5,
                 epochs: int = 16, batch_scenes: int = 32, lr: float = 1e-3,
                 input_range: float = 128.0, output_range: float = 96.0,
                 top_k: int | None = 20, sigma: float = 1.0,
                 ranking_weight: float = 1e-2, radius: float = 1.8,
                 num_endpoints: int = 6, val_probe: int = 100, seed: int = 0):
        self.channels = channels
        self.resolution = resolution
        self.epochs = epochs
        self.batch_scenes = batch_scenes
        self.lr = lr
        self.input_range = input_range
        self.output_range = output_range
        self.top_k = top_k
        self.sigma = sigma
        self.ranking_weight = ranking_weight
        self.radius = radius
        self.num_endpoints = num_endpoints
        self.val_probe = val_probe
        self.seed = seed

    # -- sklearn parameter plumbing ------------------------------------------
    # get_params comes from BaseEstimator; set_params is reimplemented so an
    # unknown name raises the package's ConfigError (still a ValueError).

    def set_params(self, **params) -> "GohomePredictor":
        valid = self.get_params(deep=False)
        for name, value in params.items():
            if name not in valid:
                raise ConfigError(f"unknown parameter {name!r}")
            setattr(self, name, value)
        return self

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs, batch_scenes=self.batch_scenes, lr=self.lr,
            input_range=self.input_range, output_range=self.output_range,
            top_k=self.top_k, sigma=self.sigma,
            ranking_weight=self.ranking_weight, radius=self.radius,
            num_endpoints=self.num_endpoints, val_probe=self.val_probe,
            seed=self.seed,
        )

    def _require_fitted(self) -> GohomeModel:
        model = getattr(self, "model_", None)
        if model is None:
            raise ConfigError("predictor is not fitted; call fit or load first")
        return model

    # -- estimator surface -----------------------------------------------------

    def fit(self, scenes, val_scenes=None, checkpoint_dir=None) -> "GohomePredictor":
        scenes = check_scenes(scenes)
        val = check_scenes(val_scenes) if val_scenes else None
        horizon = scenes[0].horizon
        self.model_ = GohomeModel(
            channels=self.channels,
            history_steps=horizon.history_steps,
            future_steps=horizon.future_steps,
            resolution=self.resolution,
            seed=self.seed,
        )
        self.history_ = train(
            self.model_, scenes, val, self._train_config(), checkpoint_dir=checkpoint_dir
        )
        return self

    def predict(self, scenes) -> list[ScenePrediction]:
        model = self._require_fitted()
        out = []
        for scene in check_scenes(scenes):
            pred, _, _ = predict_scene(
                model, scene,
                output_range=self.output_range, input_range=self.input_range,
                top_k=self.top_k, num_endpoints=self.num_endpoints,
                radius=self.radius,
            )
            out.append(pred)
        return out

    def predict_heatmap(self, scene: Scene):
        """The projected endpoint heatmap for one scene."""
        model = self._require_fitted()
        _, heat, _ = predict_scene(
            model, scene,
            output_range=self.output_range, input_range=self.input_range,
            top_k=self.top_k, num_endpoints=self.num_endpoints,
            radius=self.radius,
        )
        return heat

    def evaluate(self, scenes, ks=(1, 6), threshold: float = 2.0) -> MetricReport:
        scenes = check_scenes(scenes)
        return evaluate_scenes(self, scenes, ks=ks, threshold=threshold)

    def score(self, scenes) -> float:
        """Hit rate (1 - miss rate) at the configured prediction count."""
        self._require_fitted()
        scenes = check_scenes(scenes)
        stats = validation_metrics(self.model_, scenes, self._train_config())
        return 1.0 - stats["mr"]

    # -- persistence -------------------------------------------------------------

    def save(self, path) -> None:
        save_model(self._require_fitted(), path)

    def load(self, path) -> "GohomePredictor":
        """Attach a trained checkpoint, adopting its architecture knobs."""
        self.model_ = load_model(path)
        self.channels = self.model_.channels
        self.resolution = self.model_.resolution
        self.history_ = []
        return self


def evaluate_scenes(predictor: GohomePredictor, scenes: list[Scene],
                    ks=(1, 6), threshold: float = 2.0) -> MetricReport:
    preds = predictor.predict(scenes)
    return evaluate(preds, [s.gt_future for s in scenes], ks=ks, threshold=threshold)
