"""The seven-classifier attacker zoo (five DNNs via torch, SVM/KNN via scikit-learn)."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from sklearn.neighbors import KNeighborsClassifier
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler
from sklearn.svm import SVC
from torch import nn

from . import prand
from .traces import Channel, Dataset


class ClassifierKind(enum.Enum):
    MLP = "mlp"
    RNN = "rnn"
    CNN = "cnn"
    CNN_DEEP = "cnn_deep"
    CNN_WIDE = "cnn_wide"
    SVM = "svm"
    KNN = "knn"


DNN_KINDS = {ClassifierKind.MLP, ClassifierKind.RNN, ClassifierKind.CNN,
             ClassifierKind.CNN_DEEP, ClassifierKind.CNN_WIDE}


@dataclass(frozen=True)
class ClassifierSpec:
    kind: ClassifierKind
    depth_profile: int = 16
    width_multiplier: float = 1.0
    train_hparams: dict = field(default_factory=dict)

    @classmethod
    def default(cls, kind: ClassifierKind, profile: str = "full") -> "ClassifierSpec":
        depth = 25 if kind is ClassifierKind.CNN_DEEP else 16
        width = 2.0 if kind is ClassifierKind.CNN_WIDE else 1.0
        hp = {}
        if profile == "ci" and kind in DNN_KINDS:
            depth = min(depth, 8)
            hp = {"epochs": 6}
        return cls(kind=kind, depth_profile=depth, width_multiplier=width, train_hparams=hp)


def _input_norm(channel: Channel) -> float:
    return 256.0 if channel is Channel.MEMORY else 64.0


class _Mlp(nn.Module):
    def __init__(self, signal_len, n_classes, norm):
        super().__init__()
        self.norm = norm
        self.net = nn.Sequential(
            nn.Linear(signal_len, 64), nn.ReLU(),
            nn.Linear(64, 64), nn.ReLU(),
            nn.Linear(64, n_classes),
        )

    def forward(self, x):
        return self.net(x / self.norm)


class _Rnn(nn.Module):
    def __init__(self, signal_len, n_classes, norm, hidden=64):
        super().__init__()
        self.norm = norm
        self.gru = nn.GRU(1, hidden, batch_first=True)
        self.head = nn.Linear(hidden, n_classes)

    def forward(self, x):
        out, _ = self.gru((x / self.norm).unsqueeze(-1))
        return self.head(out[:, -1])


class _Cnn(nn.Module):
    """1-D conv stack: kernel 3, stride-2 downsample every 4th layer, GAP head."""

    def __init__(self, signal_len, n_classes, norm, depth=16, width_multiplier=1.0):
        super().__init__()
        self.norm = norm
        layers = []
        ch_in = 1
        ch = max(4, int(round(16 * width_multiplier)))
        cap = int(round(64 * width_multiplier))
        for i in range(depth):
            stride = 2 if i % 4 == 3 else 1
            layers += [nn.Conv1d(ch_in, ch, 3, stride=stride, padding=1),
                       nn.BatchNorm1d(ch), nn.ReLU()]
            ch_in = ch
            if stride == 2:
                ch = min(ch * 2, cap)
        self.features = nn.Sequential(*layers)
        self.head = nn.Linear(ch_in, n_classes)
        self.conv_depth = depth

    def forward(self, x):
        z = self.features((x / self.norm).unsqueeze(1))
        return self.head(z.mean(dim=2))


@dataclass
class Classifier:
    spec: ClassifierSpec
    model: object
    n_classes: int
    signal_len: int
    channel: Channel
    seed: int
    fitted: bool = False

    def parameter_count(self) -> int:
        if self.spec.kind in DNN_KINDS:
            return sum(p.numel() for p in self.model.parameters())
        raise ValueError("parameter count is only defined for DNN attackers")

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        """Probability rows; SVM/KNN hard labels are one-hot encoded."""
        if not self.fitted:
            raise RuntimeError("classifier is not fitted")
        if self.spec.kind in DNN_KINDS:
            self.model.eval()
            with torch.no_grad():
                probs = []
                xt = torch.as_tensor(x, dtype=torch.float32)
                for i in range(0, len(xt), 512):
                    probs.append(torch.softmax(self.model(xt[i : i + 512]), dim=1))
                return torch.cat(probs).double().numpy()
        labels = self.model.predict(x)
        out = np.zeros((len(x), self.n_classes))
        out[np.arange(len(x)), labels.astype(int)] = 1.0
        return out

    def predict(self, x: np.ndarray) -> np.ndarray:
        # argmax ties break toward the lowest class index
        return np.argmax(self.predict_proba(x), axis=1)


def build_classifier(spec: ClassifierSpec, signal_len: int, n_classes: int, seed: int,
                     channel: Channel = Channel.MEMORY) -> Classifier:
    norm = _input_norm(channel)
    torch.manual_seed(prand.derive_seed(seed, hash(spec.kind.value) & 0xFFFF) & 0x7FFFFFFF)
    if spec.kind is ClassifierKind.MLP:
        model = _Mlp(signal_len, n_classes, norm)
    elif spec.kind is ClassifierKind.RNN:
        model = _Rnn(signal_len, n_classes, norm)
    elif spec.kind in (ClassifierKind.CNN, ClassifierKind.CNN_DEEP, ClassifierKind.CNN_WIDE):
        model = _Cnn(signal_len, n_classes, norm, depth=spec.depth_profile,
                     width_multiplier=spec.width_multiplier)
    elif spec.kind is ClassifierKind.SVM:
        model = make_pipeline(StandardScaler(), SVC(kernel=spec.train_hparams.get("kernel", "rbf")))
    elif spec.kind is ClassifierKind.KNN:
        model = KNeighborsClassifier(n_neighbors=spec.train_hparams.get("k", 5))
    else:
        raise ValueError(f"unsupported classifier kind: {spec.kind}")
    return Classifier(spec, model, n_classes, signal_len, channel, seed)


def train_classifier(c: Classifier, d: Dataset) -> Classifier:
    """Fit in place and return the classifier; deterministic given its seed."""
    if len(d) == 0:
        raise ValueError("empty dataset")
    x, y = d.as_arrays()
    if len(np.unique(y)) < 2:
        raise ValueError("single-class dataset")
    if c.spec.kind not in DNN_KINDS:
        c.model.fit(x, y)
        c.fitted = True
        return c
    hp = c.spec.train_hparams
    epochs = hp.get("epochs", 15)
    batch = hp.get("batch", 128)
    lr = hp.get("lr", 1e-3)
    torch.manual_seed(prand.derive_seed(c.seed, 0xF17) & 0x7FFFFFFF)
    rng = np.random.default_rng(prand.derive_seed(c.seed, 0xBA7) & 0xFFFFFFFF)
    model = c.model
    model.train()
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    xt = torch.as_tensor(x, dtype=torch.float32)
    yt = torch.as_tensor(y)
    for _ in range(epochs):
        order = rng.permutation(len(xt))
        for i in range(0, len(order), batch):
            idx = order[i : i + batch]
            if len(idx) < 2:
                continue  # BatchNorm needs >= 2 samples
            opt.zero_grad()
            loss = F.cross_entropy(model(xt[idx]), yt[idx])
            loss.backward()
            opt.step()
    c.fitted = True
    return c


def eval_accuracy(c: Classifier, d: Dataset) -> float:
    if len(d) == 0:
        raise ValueError("empty dataset")
    x, y = d.as_arrays()
    return float(np.mean(c.predict(x) == y))
