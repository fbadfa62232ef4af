import numpy as np
import pytest

from slat.degradations import (
    DegradationSpec,
    _poisson_counts,
    add_gaussian,
    add_poisson,
    degrade,
    random_loss,
)
from slat.errors import ValidationError
from slat.image import Image
from slat.seeds import substream


def test_zero_variance_is_identity(rng):
    img = Image(rng.random((3, 8, 8)))
    out = add_gaussian(img, 0.0, 0.0, seed=5)
    assert np.array_equal(out.data, img.data)


def test_gaussian_sample_variance_near_nominal():
    img = Image(np.full((3, 256, 256), 0.5))
    out = add_gaussian(img, 0.0, 0.001, seed=7)
    # mid-gray with sigma ~ 0.03: the [0,1] clamp never fires, so the
    # post-clamp residual variance is the raw sample variance
    resid = out.data - img.data
    assert abs(resid.var() - 0.001) < 0.1 * 0.001
    assert abs(resid.mean()) < 1e-3


def test_gaussian_clamps_to_unit_range():
    img = Image(np.full((1, 64, 64), 0.98))
    out = add_gaussian(img, 0.0, 0.1, seed=3)
    assert out.data.max() <= 1.0 and out.data.min() >= 0.0


def test_gaussian_determinism(rng):
    img = Image(rng.random((3, 16, 16)))
    a = add_gaussian(img, 0.0, 0.01, seed=42)
    b = add_gaussian(img, 0.0, 0.01, seed=42)
    c = add_gaussian(img, 0.0, 0.01, seed=43)
    assert np.array_equal(a.data, b.data)
    assert not np.array_equal(a.data, c.data)


def test_poisson_rate_at_full_intensity_is_peak():
    img = Image(np.ones((1, 250, 400)))
    counts = _poisson_counts(img, 255.0, substream(0, "noise"))
    assert abs(counts.mean() - 255.0) < 0.5


def test_poisson_sample_mean_at_rate_ten():
    v = 9.0 / 254.0  # 1 + v*(255-1) = 10
    img = Image(np.full((1, 250, 400), v))
    counts = _poisson_counts(img, 255.0, substream(1, "noise"))
    assert abs(counts.mean() - 10.0) < 0.1


def test_poisson_output_range_and_determinism(rng):
    img = Image(rng.random((3, 32, 32)))
    a = add_poisson(img, 255.0, seed=9)
    b = add_poisson(img, 255.0, seed=9)
    assert np.array_equal(a.data, b.data)
    assert a.data.min() == 0.0 and a.data.max() == 1.0


def test_poisson_rejects_bad_peak(rng):
    with pytest.raises(ValidationError):
        add_poisson(Image(rng.random((1, 4, 4))), 0.0, seed=0)


def test_loss_fraction_zero(rng):
    img = Image(rng.random((3, 10, 10)))
    out, mask = random_loss(img, 0.0, seed=2)
    assert np.array_equal(out.data, img.data)
    assert mask.bits.all()


def test_loss_exact_site_count(rng):
    img = Image(rng.random((3, 100, 100)) + 0.01)
    out, mask = random_loss(img, 0.6, seed=2)
    for c in range(3):
        assert (~mask.bits[c]).sum() == 6000
        assert not out.data[c][~mask.bits[c]].any()


def test_loss_shared_sites_by_default(rng):
    img = Image(rng.random((3, 20, 20)))
    _, mask = random_loss(img, 0.5, per_channel=False, seed=4)
    assert np.array_equal(mask.bits[0], mask.bits[1])
    assert np.array_equal(mask.bits[0], mask.bits[2])


def test_loss_per_channel_sites_differ(rng):
    img = Image(rng.random((3, 20, 20)))
    _, mask = random_loss(img, 0.5, per_channel=True, seed=4)
    assert not np.array_equal(mask.bits[0], mask.bits[1])
    for c in range(3):
        assert (~mask.bits[c]).sum() == 200


def test_loss_determinism(rng):
    img = Image(rng.random((3, 15, 15)))
    _, m1 = random_loss(img, 0.3, seed=8)
    _, m2 = random_loss(img, 0.3, seed=8)
    assert np.array_equal(m1.bits, m2.bits)


def test_loss_rejects_full_fraction(rng):
    with pytest.raises(ValidationError):
        random_loss(Image(rng.random((1, 4, 4))), 1.0)


def test_degrade_empty_spec_is_identity(rng):
    img = Image(rng.random((3, 12, 12)))
    out, mask = degrade(img, DegradationSpec())
    assert np.array_equal(out.data, img.data)
    assert mask.bits.all() and mask.channels == 3


def test_degrade_blur_only_equals_operator(rng):
    img = Image(rng.random((3, 30, 20)))
    spec = DegradationSpec(blur="vbox10")
    out, mask = degrade(img, spec)
    op = spec.blur_operator()
    for c in range(3):
        assert np.array_equal(out.data[c], op.apply(img.data[c]))
    assert mask.bits.all()


def test_degrade_order_blur_noise_loss(rng):
    img = Image(rng.random((3, 24, 24)))
    spec = DegradationSpec(noise="gaussian", noise_var=0.005, loss_fraction=0.4, blur="vbox5", seed=17)
    out, mask = degrade(img, spec)
    op = spec.blur_operator()
    step = Image(np.stack([op.apply(img.data[c]) for c in range(3)]))
    step = add_gaussian(step, 0.0, 0.005, seed=17)
    manual, manual_mask = random_loss(step, 0.4, per_channel=False, seed=17)
    assert np.array_equal(out.data, manual.data)
    assert np.array_equal(mask.bits, manual_mask.bits)


def test_spec_validation():
    with pytest.raises(ValidationError):
        DegradationSpec(noise="salt")
    with pytest.raises(ValidationError):
        DegradationSpec(noise_var=-1.0)
    with pytest.raises(ValidationError):
        DegradationSpec(loss_fraction=1.0)
    with pytest.raises(ValidationError):
        DegradationSpec(blur="disk3")


def test_spec_describe_and_kv_roundtrip():
    spec = DegradationSpec(noise="gaussian", noise_var=0.001, loss_fraction=0.6, blur="vbox10", seed=3)
    assert spec.describe() == "vbox10+gauss(var=0.001)+loss(0.6)"
    assert DegradationSpec.from_kv(spec.to_kv()) == spec
    assert DegradationSpec().describe() == "none"


def test_blur_operator_lengths():
    assert DegradationSpec(blur="vbox10").blur_operator().kernel.shape == (10, 1)
    assert DegradationSpec(blur="vbox").blur_operator().kernel.shape == (10, 1)
    assert DegradationSpec().blur_operator() is None
