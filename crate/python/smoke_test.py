"""Exercise the echoforge_py bindings end to end on a tiny synthetic set."""

import json
import os
import tempfile

import numpy as np

import echoforge_py as ef


def main():
    a = ef.generate_sweep("a")
    assert a.shape == (600,)
    corr = ef.cross_correlate(np.roll(a, 29), a)
    assert int(np.argmax(corr)) == 29

    scene = {
        "reflectors": [{"trajectory": [{"t": 0.0, "d": 0.10}], "reflectivity": 0.8}],
        "duration": 0.24,
    }
    m1, m2 = ef.render_scene(json.dumps(scene), seed=1)
    assert m1.shape == m2.shape == (20 * 600,)

    pipe = ef.Pipeline()
    prof = pipe.profiles(m1, m2)
    assert prof.shape == (4, 600, 20)
    rows = np.argmax(prof[:, :70, :], axis=1)
    assert np.all(np.abs(rows - 29) <= 1), rows
    diff = ef.differential(prof[0])
    # The first and last frames carry the filter's edge transient.
    assert np.all(diff[:, 2:-1] == 0.0)

    tensors, labels = ef.synth_gesture_set(2, seed=3)
    assert tensors.shape == (12,) + tuple(ef.TENSOR_SHAPE)
    assert tensors.dtype == np.float32
    print("classes:", sorted({ef.class_name(int(c)) for c in labels}))

    model = ef.Classifier(seed=0)
    log = model.fit(tensors, labels, epochs=2, seed=0)
    assert len(log) == 2 and all(np.isfinite(loss) for loss, _ in log)
    classes, conf = model.predict(tensors)
    assert classes.shape == conf.shape == (12,)
    assert np.all((conf > 0) & (conf <= 1))

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "model.efck")
        model.save(path)
        again = ef.Classifier.load(path)
        assert np.array_equal(again.predict(tensors)[0], classes)

    cm = ef.confusion(labels, classes)
    assert cm.shape == (30, 30) and cm.sum() == 12
    per_class, macro = ef.false_positive_rate(labels, labels)
    assert macro == 0.0
    print(f"{model.num_params} parameters, training loss {log[-1][0]:.3f}, accuracy {np.mean(classes == labels):.2f}")
    print("smoke test ok")


if __name__ == "__main__":
    main()
