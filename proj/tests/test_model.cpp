#include <doctest.h>

#include <cstdio>
#include <random>

#include "pokedyn/model.hpp"
#include "pokedyn/sim.hpp"

using namespace pokedyn;

namespace {

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.H = cfg.W = 16;
    cfg.K = 3;
    cfg.G = 20;
    return cfg;
}

Cloud render_cloud(int size, std::uint64_t seed) {
    SimConfig scfg;
    scfg.H = scfg.W = size;
    scfg.focal = size;
    return render(make_scene(scfg, seed), scfg).cloud;
}

}  // namespace

TEST_CASE("forward model at init: identity cloud, zero flow, normalized masks") {
    ModelConfig cfg = small_config();
    ParamStore params = init_params(cfg, 1);
    SimConfig scfg;
    scfg.H = scfg.W = cfg.H;
    scfg.focal = cfg.H;
    Cloud P = render_cloud(cfg.H, 3);
    PokeAction u{0.1, -0.05, 1.2};

    Tape t;
    ParamLeaves pl = make_leaves(t, params, false);
    ForwardOut out = forward_model(t, P, u, params, pl, cfg, scfg.camera().K);

    for (std::size_t i = 0; i < P.pts.size(); ++i)
        CHECK(out.P_hat.val()[i] == doctest::Approx(P.pts[i]).epsilon(1e-12));
    for (double v : out.flow.val()) CHECK(v == doctest::Approx(0.0).epsilon(1e-9));

    std::size_t npix = static_cast<std::size_t>(cfg.H) * cfg.W;
    for (std::size_t p = 0; p < npix; ++p) {
        double s = 0;
        for (int k = 0; k < cfg.K; ++k) s += out.masks.val()[k * npix + p];
        CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
        // background channel initialized to dominate: strictly the largest
        // share everywhere, and an outright majority
        double bg = out.masks.val()[p];
        CHECK(bg > 0.5);
        for (int k = 1; k < cfg.K; ++k) CHECK(bg > out.masks.val()[k * npix + p]);
    }
}

TEST_CASE("encoder: determinism and latent length") {
    ModelConfig cfg = small_config();
    ParamStore params = init_params(cfg, 2);
    Cloud P = render_cloud(cfg.H, 5);
    auto run = [&] {
        Tape t;
        ParamLeaves pl = make_leaves(t, params, false);
        return encode(t, cloud_input(t, P, cfg), params, pl, cfg).latent.val();
    };
    auto a = run(), b = run();
    CHECK(a.size() == static_cast<std::size_t>(cfg.latent));
    CHECK(a == b);
}

TEST_CASE("inverse model: heatmaps normalized, no-motion input legal") {
    ModelConfig cfg = small_config();
    ParamStore params = init_params(cfg, 3);
    Cloud P = render_cloud(cfg.H, 7);
    Tape t;
    ParamLeaves pl = make_leaves(t, params, false);
    Tensor in = cloud_input(t, P, cfg);
    InverseOut out = inverse_model(t, in, in, params, pl, cfg);
    double sa = 0, sb = 0;
    for (double v : out.heat_start.val()) { CHECK(std::isfinite(v)); sa += v; }
    for (double v : out.heat_end.val()) sb += v;
    CHECK(sa == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(sb == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(out.latent_next.val().size() == static_cast<std::size_t>(cfg.latent));
}

TEST_CASE("every parameter group receives gradient on a moving episode") {
    ModelConfig cfg = small_config();
    ParamStore params = init_params(cfg, 4);
    // nudge away from the exact identity init so SE3 gradients are not
    // masked by the zero-flow stationary point
    std::mt19937_64 nrng(9);
    std::uniform_real_distribution<double> nu(-0.01, 0.01);
    for (auto& p : params.all())
        for (auto& v : p.value) v += nu(nrng);

    SimConfig scfg;
    scfg.H = scfg.W = cfg.H;
    scfg.focal = cfg.H;
    SimConfig empty_cfg = scfg;
    empty_cfg.min_objects = empty_cfg.max_objects = 0;
    RenderResult er = render(make_scene(empty_cfg, 0), empty_cfg);
    std::mt19937_64 rng(5);
    EpisodeRecord ep = generate_episode(make_scene(scfg, 11), er, scfg, rng);

    Tape t;
    ParamLeaves pl = make_leaves(t, params, true);
    ForwardOut fwd = forward_model(t, ep.P_t, ep.action, params, pl, cfg, scfg.camera().K);
    Tensor in_t = cloud_input(t, ep.P_t, cfg);
    Tensor in_t1 = cloud_input(t, ep.P_t1, cfg);
    InverseOut inv = inverse_model(t, in_t, in_t1, params, pl, cfg);

    // simple composite objective touching all heads
    Tensor root = t.reduce_sum(t.mul(fwd.P_hat, fwd.P_hat));
    root = t.add(root, t.reduce_sum(t.mul(fwd.masks, fwd.masks)));
    root = t.add(root, t.reduce_sum(t.mul(fwd.s_next, fwd.s_next)));
    root = t.add(root, t.reduce_sum(t.mul(inv.heat_start, inv.heat_start)));
    root = t.add(root, t.reduce_sum(t.mul(inv.heat_end, inv.heat_end)));
    t.backward(root);

    for (std::size_t i = 0; i < params.all().size(); ++i) {
        double norm = 0;
        for (double g : pl.leaves[i].grad()) norm += g * g;
        CAPTURE(params.all()[i].name);
        CHECK(norm > 0.0);
    }
}

TEST_CASE("checkpoint roundtrip and validation") {
    ModelConfig cfg = small_config();
    ParamStore params = init_params(cfg, 6);
    std::string path = "/tmp/pokedyn_test_ckpt.bin";
    save_checkpoint(path, cfg, params, 123);

    ModelConfig loaded_cfg;
    int step = 0;
    ParamStore loaded = load_checkpoint(path, loaded_cfg, &step);
    CHECK(step == 123);
    CHECK(loaded_cfg == cfg);
    REQUIRE(loaded.all().size() == params.all().size());
    for (std::size_t i = 0; i < params.all().size(); ++i) {
        CHECK(loaded.all()[i].name == params.all()[i].name);
        REQUIRE(loaded.all()[i].value.size() == params.all()[i].value.size());
        for (std::size_t j = 0; j < params.all()[i].value.size(); ++j)
            CHECK(loaded.all()[i].value[j] ==
                  doctest::Approx(params.all()[i].value[j]).epsilon(1e-6));
    }
    std::remove(path.c_str());

    CHECK_THROWS(load_checkpoint("/tmp/pokedyn_missing_ckpt.bin", loaded_cfg));
}

TEST_CASE("numeric health: finite encoder outputs over random inputs at init") {
    ModelConfig cfg = small_config();
    cfg.H = cfg.W = 8;
    ParamStore params = init_params(cfg, 7);
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-0.3, 0.3), uz(0.5, 1.5);
    for (int trial = 0; trial < 100; ++trial) {
        Cloud P;
        P.init(cfg.H, cfg.W);
        for (std::size_t p = 0; p < P.valid.size(); ++p) {
            P.pts[p * 3] = u(rng);
            P.pts[p * 3 + 1] = u(rng);
            P.pts[p * 3 + 2] = uz(rng);
            P.valid[p] = 1;
        }
        Tape t;
        ParamLeaves pl = make_leaves(t, params, false);
        EncoderOut out = encode(t, cloud_input(t, P, cfg), params, pl, cfg);
        for (double v : out.latent.val()) REQUIRE(std::isfinite(v));
    }
}
