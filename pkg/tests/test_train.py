import math

import numpy as np
import pytest

from autobahn.harness import random_molecule
from autobahn.model import ModelConfig, init_params
from autobahn.train import (
    TrainingError,
    TrainSchedule,
    format_trace,
    train,
)

CFG = ModelConfig(channels=8, readout_hidden=8, atom_types=4, bond_types=3)


def molecules(seed, count, lo=5, hi=10):
    rng = np.random.default_rng(seed)
    return [random_molecule(rng, int(rng.integers(lo, hi + 1)), atom_types=4, bond_types=3)
            for _ in range(count)]


def test_schedule_shape():
    s = TrainSchedule(base_lr=0.1, warmup_epochs=4, decay_milestones=(10, 20))
    assert [s.lr_at(e) for e in (1, 2, 4)] == [0.025, 0.05, 0.1]
    assert s.lr_at(5) == 0.1 and s.lr_at(10) == 0.1
    assert s.lr_at(11) == pytest.approx(0.01) and s.lr_at(21) == pytest.approx(0.001)
    assert TrainSchedule().base_lr == 0.0003
    assert TrainSchedule.from_dict(s.to_dict()) == s


@pytest.mark.parametrize("bad", [{"base_lr": 0}, {"decay_milestones": (5, 3)},
                                 {"batch_size": 0}, {"epochs": -1}])
def test_schedule_validation(bad):
    with pytest.raises(ValueError):
        TrainSchedule(**bad)


def test_zero_epochs_leaves_model_unchanged():
    params = init_params(CFG)
    res = train(params, CFG, molecules(0, 4), [1.0, 2.0, 0.0, 1.0], TrainSchedule(epochs=0))
    assert all(np.array_equal(res.params[k], params[k]) for k in params)
    assert len(res.trace) == 1 and res.trace[0].epoch == 0
    assert res.final_mae == res.trace[0].train_mae


def test_constant_target_loss_decreases_monotonically():
    graphs = molecules(1, 24)
    res = train(init_params(CFG), CFG, graphs, [2.0] * len(graphs),
                TrainSchedule(base_lr=3e-4, epochs=10, batch_size=8))
    losses = [r.train_mse for r in res.trace]
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_single_record_is_memorised():
    g = molecules(2, 1)
    res = train(init_params(CFG), CFG, g, [1.5], TrainSchedule(base_lr=1e-3, epochs=150))
    assert res.final_mae < 0.01 * res.trace[0].train_mae


def test_training_is_deterministic():
    graphs = molecules(3, 12)
    y = np.linspace(0, 2, 12)
    sched = TrainSchedule(base_lr=1e-3, epochs=3, batch_size=5)
    a = train(init_params(CFG), CFG, graphs, y, sched, seed=4)
    b = train(init_params(CFG), CFG, graphs, y, sched, seed=4)
    assert format_trace(a.trace) == format_trace(b.trace)
    assert all(a.params[k].tobytes() == b.params[k].tobytes() for k in a.params)
    c = train(init_params(CFG), CFG, graphs, y, sched, seed=5)
    assert format_trace(c.trace) != format_trace(a.trace)


def test_validation_columns_and_trace_format():
    graphs = molecules(6, 6)
    res = train(init_params(CFG), CFG, graphs[:4], [0, 1, 2, 1], TrainSchedule(epochs=2),
                val_graphs=graphs[4:], val_targets=[1, 1])
    assert all(r.val_mae is not None and r.val_mae >= 0 for r in res.trace)
    text = format_trace(res.trace)
    lines = text.splitlines()
    assert lines[0] == "# epoch lr train_mse train_mae val_mse val_mae"
    assert len(lines) == 4 and len(lines[1].split()) == 6
    bare = format_trace(train(init_params(CFG), CFG, graphs[:2], [0, 1], TrainSchedule(epochs=1)).trace)
    assert bare.splitlines()[1].split()[-1] == "nan"


def test_divergence_aborts_with_diagnostic():
    graphs = molecules(7, 4)
    with pytest.raises(TrainingError, match="epoch"):
        train(init_params(CFG), CFG, graphs, [1e6, -1e6, 1e6, -1e6],
              TrainSchedule(base_lr=1e3, epochs=20, batch_size=2))


def test_bad_datasets_are_rejected():
    with pytest.raises(TrainingError):
        train(init_params(CFG), CFG, [], [], TrainSchedule())
    g = molecules(8, 1)
    with pytest.raises(TrainingError):
        train(init_params(CFG), CFG, g, [math.inf], TrainSchedule())
    with pytest.raises(TrainingError):
        train(init_params(CFG), CFG, g, [1.0, 2.0], TrainSchedule())
