import numpy as np
import pytest

from mtsfm.geometry import Intrinsics
from mtsfm.losses import total_loss
from mtsfm.ndiff import Tensor, backward, ops, precision
from mtsfm.nets import (
    DepthCNN,
    DepthTransformer,
    EgoCNN,
    EgoTransformer,
    Fusion,
    Head,
    NetConfig,
    PatchEmbed,
    Reassemble,
    SfMModel,
    TransformerEncoder,
    depth_forward,
    disp_to_depth,
    ego_forward,
    parse_arch,
    stack_pair,
    to_nchw,
)
from mtsfm.nets.checkpoint import CheckpointError
from mtsfm.nets.config import PAPER_EGO_CHANNELS, PAPER_REASSEMBLE
from mtsfm.nets.conv import ResEncoder
from mtsfm.train import batch_loss
from mtsfm.pipeline.synth import SceneConfig, synth_scene


@pytest.fixture(scope="module")
def desk():
    return NetConfig.desk()


def small_cfg(**kw):
    # 32x32 desk-scale net, cheap enough for gradient plumbing tests
    from dataclasses import replace

    return replace(NetConfig.desk(32, 32), **kw)


# -- config -------------------------------------------------------------------
def test_config_invariants():
    with pytest.raises(ValueError):
        NetConfig(height=100, width=640)
    with pytest.raises(ValueError):
        NetConfig(tap_layers=(3, 6, 9))
    with pytest.raises(ValueError):
        NetConfig(tap_layers=(3, 3, 9, 12))
    with pytest.raises(ValueError):
        NetConfig(tap_layers=(3, 6, 9, 13))
    with pytest.raises(ValueError):
        NetConfig(embed_dim=770)


def test_config_text_round_trip(desk):
    assert NetConfig.from_text(desk.to_text()) == desk


def test_desk_preset_scaling(desk):
    assert desk.embed_dim == 32 and desk.num_layers == 4 and desk.num_heads == 4 and desk.patch_size == 8
    assert desk.tap_layers == (1, 2, 3, 4)
    assert desk.reassemble_channels == tuple(round(c * 32 / 768) for c in PAPER_REASSEMBLE)
    assert desk.ego_channels == round(PAPER_EGO_CHANNELS * 32 / 768)


def test_parse_arch():
    assert parse_arch("T,C") == "tc"
    assert parse_arch("(c, t)") == "ct"
    with pytest.raises(ValueError):
        parse_arch("tx")


# -- patch embedding and encoder ----------------------------------------------
def test_patch_counts():
    assert NetConfig(height=192, width=640).num_patches == 480
    embed = PatchEmbed(3, 8, 16, (2, 2), np.random.default_rng(0))
    tok = embed(Tensor(np.zeros((1, 3, 32, 32))))
    assert tok.shape == (1, 5, 8)


def test_patch_embed_full_size():
    embed = PatchEmbed(3, 4, 16, (12, 40), np.random.default_rng(0))
    assert embed(Tensor(np.zeros((1, 3, 192, 640)))).shape == (1, 481, 4)


def test_patch_embed_rejects_indivisible():
    embed = PatchEmbed(3, 4, 16, (2, 2), np.random.default_rng(0))
    with pytest.raises(ValueError):
        embed(Tensor(np.zeros((1, 3, 30, 32))))


def test_six_channel_embed_linearity(rng):
    e3 = PatchEmbed(3, 8, 8, (2, 2), np.random.default_rng(3))
    e6 = PatchEmbed(6, 8, 8, (2, 2), np.random.default_rng(3))
    w3 = e3.proj.weight.data
    e6.proj.weight.data = np.concatenate([w3, w3], axis=1)  # duplicated across frames
    e3.proj.bias.data[...] = 0
    e6.proj.bias.data[...] = 0
    x = rng.random((1, 3, 16, 16))
    t3 = e3.patch_tokens(Tensor(x)).data
    t6 = e6.patch_tokens(Tensor(np.concatenate([x, x], axis=1))).data
    np.testing.assert_allclose(t6, 2 * t3, atol=1e-12)


def test_ego_embed_initialised_from_single_frame(rng):
    # the built-in duplication halves the copies, so identical frames match a 3-channel embed
    e6 = PatchEmbed(6, 8, 8, (2, 2), np.random.default_rng(3), duplicate_from=3)
    e3 = PatchEmbed(3, 8, 8, (2, 2), np.random.default_rng(3))
    e3.proj.weight.data = e6.proj.weight.data[:, :3] * 2
    e3.proj.bias.data = e6.proj.bias.data.copy()
    x = rng.random((1, 3, 16, 16))
    np.testing.assert_allclose(
        e6.patch_tokens(Tensor(np.concatenate([x, x], 1))).data, e3.patch_tokens(Tensor(x)).data, atol=1e-12
    )


def test_position_resize():
    embed = PatchEmbed(3, 4, 8, (4, 4), np.random.default_rng(0))
    assert embed(Tensor(np.zeros((1, 3, 32, 64)))).shape == (1, 33, 4)


def test_encoder_shapes_and_attention_rows(desk, rng):
    enc = TransformerEncoder(desk, 3, np.random.default_rng(0))
    tokens = enc.embed(Tensor(rng.random((1, 3, 64, 64))))
    outs = enc.encode(tokens)
    assert len(outs) == desk.num_layers
    assert all(o.shape == tokens.shape for o in outs)
    for blk in enc.blocks:
        np.testing.assert_allclose(blk.attn.last_attn.sum(-1), 1.0, atol=1e-12)


def test_encoder_rejects_bad_heads():
    with pytest.raises(ValueError):
        NetConfig.desk().__class__(height=64, width=64, patch_size=8, embed_dim=30, num_heads=4, num_layers=4, tap_layers=(1, 2, 3, 4))


def test_permutation_equivariance(rng):
    cfg = small_cfg(height=32, width=32, patch_size=16)  # 2x2 grid -> 4 tokens
    enc = TransformerEncoder(cfg, 3, np.random.default_rng(0))
    tokens = rng.normal(size=(1, 5, cfg.embed_dim))
    perm = [0, 3, 1, 4, 2]  # readout stays first
    a = enc.encode(Tensor(tokens))
    b = enc.encode(Tensor(tokens[:, perm]))
    for x, y in zip(a, b):
        np.testing.assert_allclose(x.data[:, perm], y.data, atol=1e-10)


def test_permuting_patches_and_positions(rng):
    cfg = small_cfg(height=32, width=32, patch_size=16)
    enc = TransformerEncoder(cfg, 3, np.random.default_rng(0))
    img = Tensor(rng.random((1, 3, 32, 32)))
    patches = enc.embed.patch_tokens(img).data
    pos = enc.embed.pos.data
    read = enc.embed.readout.data
    perm = [2, 0, 3, 1]
    tok = np.concatenate([read, patches], 1) + pos
    tok_p = np.concatenate([read, patches[:, perm]], 1) + pos[:, [0] + [p + 1 for p in perm]]
    a, b = enc.encode(Tensor(tok))[-1].data, enc.encode(Tensor(tok_p))[-1].data
    np.testing.assert_allclose(a[:, [0] + [p + 1 for p in perm]], b, atol=1e-10)


# -- reassemble / fusion / head -------------------------------------------------
@pytest.mark.parametrize(
    "stage,channels,shape",
    [("DN3", 96, (96, 48, 160)), ("DN6", 768, (768, 24, 80)), ("DN9", 1536, (1536, 12, 40)), ("EN", 2048, (2048, 12, 40))],
)
def test_reassemble_full_size_shapes(stage, channels, shape):
    with precision(np.float32):
        r = Reassemble(stage, 768, channels, 16, (12, 40), np.random.default_rng(0))
        out = r(Tensor(np.zeros((1, 481, 768))))
    assert out.shape[1:] == shape


def test_reassemble_full_size_dn12():
    # full 3072-channel stride-2 stage: the largest single layer in the full-size config
    with precision(np.float32):
        r = Reassemble("DN12", 768, 3072, 16, (12, 40), np.random.default_rng(0))
        out = r(Tensor(np.zeros((1, 481, 768))))
    assert out.shape[1:] == (3072, 6, 20)


def test_reassemble_desk_shapes(desk, rng):
    grid = (8, 8)
    expect = {"DN3": 16, "DN6": 8, "DN9": 4, "DN12": 2}
    for stage, c in zip(("DN3", "DN6", "DN9", "DN12"), desk.reassemble_channels):
        r = Reassemble(stage, 32, c, 8, grid, np.random.default_rng(0))
        out = r(Tensor(rng.normal(size=(1, 65, 32))))
        assert out.shape == (1, c, expect[stage], expect[stage])
    r = Reassemble("EN", 32, desk.ego_channels, 8, grid, np.random.default_rng(0))
    assert r(Tensor(rng.normal(size=(1, 65, 32)))).shape == (1, desk.ego_channels, 8, 8)


def test_reassemble_errors():
    with pytest.raises(ValueError):
        Reassemble("DN4", 8, 8, 8, (2, 2), np.random.default_rng(0))
    r = Reassemble("DN9", 8, 8, 8, (2, 2), np.random.default_rng(0))
    with pytest.raises(ValueError):
        r(Tensor(np.zeros((1, 7, 8))))


def test_fusion_deepest_upsamples():
    f = Fusion(12, 6, np.random.default_rng(0))
    assert f(Tensor(np.random.default_rng(1).random((1, 12, 6, 20)))).shape == (1, 6, 12, 40)


def test_fusion_shape_trace():
    rng = np.random.default_rng(0)
    x = None
    sizes = [(6, 20), (12, 40), (24, 80), (48, 160)]
    for (h, w) in sizes:
        f = Fusion(4, 4, rng)
        x = f(Tensor(rng.random((1, 4, h, w))), x)
    assert x.shape == (1, 4, 96, 320)


def test_fusion_identity_path(rng):
    f = Fusion(4, 4, np.random.default_rng(0)).eval()
    for rcu in (f.rcu1, f.rcu2):
        rcu.conv1.weight.data[...] = 0
        rcu.conv2.weight.data[...] = 0
    deep = rng.random((1, 4, 5, 6))
    out = f(Tensor(np.zeros((1, 4, 5, 6))), Tensor(deep)).data
    np.testing.assert_allclose(out, ops.bilinear_upsample(Tensor(deep), 2).data, atol=1e-12)


def test_fusion_spatial_mismatch():
    f = Fusion(4, 4, np.random.default_rng(0))
    with pytest.raises(ValueError):
        f(Tensor(np.zeros((1, 4, 4, 4))), Tensor(np.zeros((1, 4, 2, 2))))


def test_head_shape_and_range(rng):
    h = Head(6, 4, np.random.default_rng(0))
    h.conv2.weight.data *= 20  # well away from the init, still short of float saturation
    out = h(Tensor(rng.normal(size=(1, 6, 5, 7)))).data
    assert out.shape == (1, 1, 10, 14)
    assert np.all((out > 0) & (out < 1))


def test_head_full_size_trace():
    with precision(np.float32):
        h = Head(96, 32, np.random.default_rng(0))
        assert h(Tensor(np.zeros((1, 96, 96, 320)))).shape == (1, 1, 192, 640)


# -- depth network ---------------------------------------------------------------
@pytest.mark.parametrize("cls", [DepthTransformer, DepthCNN])
def test_pyramid_shapes_and_range(cls, desk, rng):
    net = cls(desk, np.random.default_rng(0))
    out = depth_forward(net, rng.random((64, 64, 3)))
    assert [d.shape for d in out] == [(1, 1, 64 // 2**s, 64 // 2**s) for s in range(4)]
    for d in out:
        assert np.all((d.data > 0) & (d.data < 1))


def test_depth_deterministic(desk, rng):
    img = rng.random((64, 64, 3))
    a = depth_forward(DepthTransformer(desk, np.random.default_rng(5)), img)[0].data
    b = depth_forward(DepthTransformer(desk, np.random.default_rng(5)), img)[0].data
    assert np.array_equal(a, b)


def test_gradient_reaches_patch_embed():
    cfg = small_cfg()
    trip = synth_scene(SceneConfig(height=32, width=32, motion=(0.02, 0, 0.1)))
    net = DepthTransformer(cfg, np.random.default_rng(0))
    disps = [d.reshape(d.shape[2], d.shape[3]) for d in depth_forward(net, trip.target)]
    loss = total_loss(disps, trip.target, trip.sources, trip.intrinsics, trip.poses)
    backward(loss)
    assert np.linalg.norm(net.encoder.embed.proj.weight.grad) > 0


def test_encoder_stage_strides(rng):
    enc = ResEncoder(3, 4, np.random.default_rng(0))
    feats = enc(Tensor(rng.random((1, 3, 64, 64))))
    assert [f.shape[2:] for f in feats] == [(64 // 2 ** (s + 1),) * 2 for s in range(4)]
    assert [f.shape[1] for f in feats] == [4, 8, 16, 32]


# -- ego network ------------------------------------------------------------------
@pytest.mark.parametrize("cls", [EgoTransformer, EgoCNN])
def test_zero_pose_at_init(cls, desk, rng):
    net = cls(desk, np.random.default_rng(0))
    pose, k = ego_forward(net, rng.random((64, 64, 3)), rng.random((64, 64, 3)))
    np.testing.assert_array_equal(pose.data, 0.0)
    assert k is None


@pytest.mark.parametrize("cls", [EgoTransformer, EgoCNN])
def test_intrinsics_positive(cls, desk, rng):
    net = cls(desk, np.random.default_rng(0), predict_intrinsics=True)
    for conv in (net.decoder.focal, net.decoder.principal):
        conv.weight.data = rng.normal(0, 10, conv.weight.shape)
        conv.bias.data = rng.normal(0, 10, conv.bias.shape)
    _, k = ego_forward(net, rng.random((64, 64, 3)), rng.random((64, 64, 3)))
    assert k.shape == (1, 4)
    assert np.all(k.data[:, :2] > 0)


def test_intrinsics_init_values(desk, rng):
    net = EgoTransformer(desk, np.random.default_rng(0), predict_intrinsics=True)
    _, k = ego_forward(net, rng.random((64, 64, 3)), rng.random((64, 64, 3)))
    np.testing.assert_allclose(k.data[0], [np.log(2) * 64, np.log(2) * 64, 32, 32])


def test_intrinsics_flag_without_branch(desk, rng):
    net = EgoCNN(desk, np.random.default_rng(0))
    with pytest.raises(RuntimeError):
        ego_forward(net, rng.random((64, 64, 3)), rng.random((64, 64, 3)), predict_intrinsics=True)


def test_swapping_frames_changes_pose(desk, rng):
    net = EgoTransformer(desk, np.random.default_rng(0))
    net.decoder.pose2.weight.data = rng.normal(0, 0.1, net.decoder.pose2.weight.shape)
    # give the two frame halves of the embedding their own weights, as training does
    w = net.encoder.embed.proj.weight
    w.data = w.data + rng.normal(0, 0.05, w.shape)
    a, b = rng.random((64, 64, 3)), rng.random((64, 64, 3))
    p1 = ego_forward(net, a, b)[0].data
    p2 = ego_forward(net, b, a)[0].data
    assert np.abs(p1 - p2).max() > 1e-4


def test_duplicated_embedding_is_order_blind_at_init(desk, rng):
    # documented: both frames start with the same kernel, so order only matters after training
    net = EgoTransformer(desk, np.random.default_rng(0))
    net.decoder.pose2.weight.data = rng.normal(0, 0.1, net.decoder.pose2.weight.shape)
    a, b = rng.random((64, 64, 3)), rng.random((64, 64, 3))
    np.testing.assert_allclose(ego_forward(net, a, b)[0].data, ego_forward(net, b, a)[0].data, atol=1e-12)


# -- disparity to depth -------------------------------------------------------------
def test_disp_to_depth_values():
    assert disp_to_depth(1.0) == pytest.approx(0.1)
    assert disp_to_depth(0.0) == pytest.approx(100.0)
    assert disp_to_depth(0.5) == pytest.approx(1 / (0.5 * 9.99 + 0.01))
    assert disp_to_depth(0.5) == pytest.approx(0.1998, abs=1e-4)
    d = disp_to_depth(np.linspace(0, 1, 100))
    assert np.all(np.diff(d) < 0)


# -- whole model ------------------------------------------------------------------------
def _randomise_zero_layers(model, rng):
    dec = model.ego.decoder
    for conv in (dec.pose2, dec.focal, dec.principal):
        if conv is not None:
            conv.weight.data = rng.normal(0, 0.05, conv.weight.shape)
            conv.bias.data = rng.normal(0, 0.05, conv.bias.shape)


@pytest.mark.parametrize("arch", ["tt", "tc", "ct", "cc"])
def test_gradient_reaches_every_parameter(arch, rng):
    cfg = small_cfg()
    model = SfMModel(cfg, arch, learn_intrinsics=True, seed=0)
    _randomise_zero_layers(model, rng)
    batch = [synth_scene(SceneConfig(height=32, width=32, motion=(0.02, 0, 0.1), texture_seed=i)) for i in range(2)]
    loss, _ = batch_loss(model, batch)
    backward(loss)
    for net_name, net in (("depth", model.depth), ("ego", model.ego)):
        for name, p in net.named_parameters():
            assert p.grad is not None and np.any(p.grad != 0), f"{net_name}.{name} received no gradient"


def test_checkpoint_round_trip(tmp_path, rng):
    cfg = small_cfg()
    model = SfMModel(cfg, "tc", learn_intrinsics=True, seed=3)
    path = tmp_path / "m.sfmk"
    model.save(path)
    back = SfMModel.load(path)
    assert back.arch == "tc" and back.learn_intrinsics and back.cfg == cfg
    a, b = model.named_state(), back.named_state()
    assert a.keys() == b.keys()
    for k in a:
        np.testing.assert_array_equal(np.asarray(a[k], np.float32), np.asarray(b[k], np.float32))
    img = rng.random((32, 32, 3))
    np.testing.assert_allclose(model.predict_depth(img), back.predict_depth(img), rtol=1e-5)


def test_checkpoint_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.sfmk"
    bad.write_bytes(b"nope")
    with pytest.raises(CheckpointError):
        SfMModel.load(bad)
    good = tmp_path / "good.sfmk"
    SfMModel(small_cfg(), "cc").save(good)
    good.write_bytes(good.read_bytes()[:-3])
    with pytest.raises(CheckpointError):
        SfMModel.load(good)


def test_predict_depth_range(rng):
    model = SfMModel(small_cfg(), "tt")
    d = model.predict_depth(rng.random((32, 32, 3)))
    assert d.shape == (32, 32)
    assert np.all((d >= 0.1) & (d <= 100))


def test_separate_instances_independent(rng):
    from concurrent.futures import ThreadPoolExecutor

    img = rng.random((32, 32, 3))
    models = [SfMModel(small_cfg(), "cc", seed=s) for s in range(2)]
    serial = [m.predict_depth(img) for m in models]
    with ThreadPoolExecutor(2) as ex:
        threaded = list(ex.map(lambda m: m.predict_depth(img), models))
    for a, b in zip(serial, threaded):
        np.testing.assert_array_equal(a, b)
