import numpy as np
import pytest

from worldtraj.adapter import (
    AdapterError,
    LoraAdapter,
    NamedWeight,
    ToyPathwayNet,
    camera_invariance_cosine,
    categorize,
    category_means,
    delta_rel,
    load_weights,
    lora_apply,
    save_weights,
    subspace_overlap,
    write_delta_csv,
)


class TestCategorize:
    @pytest.mark.parametrize(
        "name,expected",
        [
            ("action_in.mlp.W", "action"),  # action_in outranks the mlp substring
            ("action_in.mlp.b", "action"),
            ("blk53.prope.W", "prope"),
            ("final.adaLN.W", "other"),
            ("blk1.attn.q.W", "attention"),
            ("blk2.attn.qkv.W", "attention"),
            ("blk7.img_attn_proj.W", "attention"),
            ("blk2.mlp.fc1.W", "mlp"),
            ("blk4.ffn.up.W", "mlp"),
            ("patch_embed.W", "other"),
        ],
    )
    def test_mapping(self, name, expected):
        assert categorize(name) == expected


class TestLoraApply:
    def test_alpha_zero_identity(self, rng):
        w = NamedWeight("w", rng.normal(size=(6, 5)))
        ad = LoraAdapter(rng.normal(size=(2, 5)), rng.normal(size=(6, 2)), alpha=0.0, rank=2)
        assert np.array_equal(lora_apply(w, ad), w.matrix)

    def test_alpha_equals_rank_cancels_scaling(self, rng):
        a, b = rng.normal(size=(3, 4)), rng.normal(size=(5, 3))
        w = NamedWeight("w", np.zeros((5, 4)))
        ad = LoraAdapter(a, b, alpha=3.0, rank=3)
        assert np.allclose(lora_apply(w, ad), b @ a, atol=1e-15)

    def test_merge_runtime_equivalence_rank32(self, rng):
        # Rank 32, alpha 16: merged(x) equals the two-step evaluation.
        m, n, r = 48, 40, 32
        w = NamedWeight("w", rng.normal(size=(m, n)))
        ad = LoraAdapter(rng.normal(size=(r, n)), rng.normal(size=(m, r)), alpha=16.0, rank=r)
        merged = lora_apply(w, ad)
        for _ in range(20):
            x = rng.normal(size=n)
            two_step = w.matrix @ x + ad.scaling * (ad.b @ (ad.a @ x))
            assert np.allclose(merged @ x, two_step, atol=1e-9)

    def test_shape_mismatch(self, rng):
        w = NamedWeight("w", rng.normal(size=(6, 5)))
        ad = LoraAdapter(rng.normal(size=(2, 4)), rng.normal(size=(6, 2)), alpha=1.0, rank=2)
        with pytest.raises(AdapterError):
            lora_apply(w, ad)


class TestDeltaRel:
    def test_identical_sets_all_zero(self, rng):
        base = [NamedWeight(f"w{i}", rng.normal(size=(4, 4))) for i in range(5)]
        rows = delta_rel(base, base)
        assert all(r.delta_rel == 0.0 for r in rows)

    def test_frobenius_arithmetic(self):
        base = [NamedWeight("w", np.eye(2))]
        ft_mat = np.eye(2)
        ft_mat[0, 0] += 0.1
        rows = delta_rel(base, [NamedWeight("w", ft_mat)])
        assert abs(rows[0].delta_rel - 0.1 / np.sqrt(2)) < 1e-12

    def test_planted_pathway_perturbation_tops_ranking(self, rng):
        base, ft = [], []
        names = (
            [f"blk{i}.prope.W" for i in range(6)]
            + ["action_in.mlp.W"]
            + [f"blk{i}.attn.q.W" for i in range(6)]
            + [f"blk{i}.mlp.fc1.W" for i in range(6)]
        )
        for name in names:
            m = rng.normal(size=(8, 8))
            cat = categorize(name)
            scale = 0.1 if cat in ("prope", "action") else 0.01
            base.append(NamedWeight(name, m))
            ft.append(NamedWeight(name, m + scale * rng.normal(size=(8, 8))))
        rows = delta_rel(base, ft)
        top7 = rows[:7]
        assert all(r.category in ("prope", "action") for r in top7)
        means = category_means(rows)
        assert means["prope"] > means["attention"]
        assert means["action"] > means["mlp"]

    def test_scale_invariance(self, rng):
        m = rng.normal(size=(4, 4))
        d = rng.normal(size=(4, 4))
        r1 = delta_rel([NamedWeight("w", m)], [NamedWeight("w", m + d)])
        r2 = delta_rel([NamedWeight("w", 7.0 * m)], [NamedWeight("w", 7.0 * (m + d))])
        assert abs(r1[0].delta_rel - r2[0].delta_rel) < 1e-12

    def test_flagged_rows(self, rng):
        base = [NamedWeight("zero", np.zeros((2, 2))), NamedWeight("only_base", np.eye(2))]
        ft = [NamedWeight("zero", np.eye(2)), NamedWeight("only_ft", np.eye(2))]
        rows = delta_rel(base, ft)
        flagged = {r.name for r in rows if r.flagged}
        assert flagged == {"zero", "only_base", "only_ft"}
        assert all(not r.flagged for r in rows[: len(rows) - 3])

    def test_csv_and_dir_round_trip(self, tmp_path, rng):
        base = [NamedWeight("blk0.prope.W", rng.normal(size=(4, 4)))]
        ft = [NamedWeight("blk0.prope.W", base[0].matrix + 0.1)]
        save_weights(tmp_path / "base", base)
        save_weights(tmp_path / "ft", ft)
        b2, f2 = load_weights(tmp_path / "base"), load_weights(tmp_path / "ft")
        assert np.array_equal(b2[0].matrix, base[0].matrix)
        rows = delta_rel(b2, f2)
        write_delta_csv(tmp_path / "d.csv", rows)
        text = (tmp_path / "d.csv").read_text()
        assert text.splitlines()[0] == "rank,delta_rel,delta_norm,base_norm,params,category,parameter"


class TestInvarianceCosine:
    def test_separable_net_exactly_one(self, rng):
        net = ToyPathwayNet(coupling=0.0, seed=4)
        cos = camera_invariance_cosine(
            net,
            rng.normal(size=12),
            rng.normal(size=12),
            rng.normal(size=12),
            rng.normal(size=12),
        )
        assert all(c == 1.0 for c in cos)

    def test_coupled_net_below_one(self, rng):
        net = ToyPathwayNet(coupling=0.5, seed=4)
        cos = camera_invariance_cosine(
            net,
            rng.normal(size=12),
            rng.normal(size=12),
            rng.normal(size=12),
            rng.normal(size=12),
        )
        assert any(c < 0.99 for c in cos)

    def test_identical_poses_flagged(self, rng):
        net = ToyPathwayNet(coupling=0.0, seed=4)
        pose = rng.normal(size=12)
        cos = camera_invariance_cosine(net, pose, pose, rng.normal(size=12), rng.normal(size=12))
        assert all(c is None for c in cos)


class TestSubspaceOverlap:
    def test_identical_sets(self, rng):
        u = rng.normal(size=(8, 6))
        assert abs(subspace_overlap(u, u.copy(), 2) - 1.0) < 1e-9

    def test_orthogonal_subspaces(self):
        u = np.eye(6)[:3]
        v = np.eye(6)[3:]
        assert subspace_overlap(u, v, 3) == 0.0

    def test_half_shared(self):
        u = np.eye(6)[[0, 1]]
        v = np.eye(6)[[0, 2]]
        assert abs(subspace_overlap(u, v, 2) - 0.5) < 1e-9

    def test_symmetric(self, rng):
        u = rng.normal(size=(10, 6))
        v = rng.normal(size=(10, 6))
        assert abs(subspace_overlap(u, v, 3) - subspace_overlap(v, u, 3)) < 1e-9

    def test_joint_rotation_invariant(self, rng):
        from worldtraj.geometry import random_rotation

        u = rng.normal(size=(10, 3))
        v = rng.normal(size=(10, 3))
        r = random_rotation(rng)
        a = subspace_overlap(u, v, 2)
        b = subspace_overlap(u @ r.T, v @ r.T, 2)
        assert abs(a - b) < 1e-9

    def test_rank_deficient_warns(self, rng):
        u = np.stack([np.ones(5), np.ones(5) * 2, np.ones(5) * 3])  # rank 1
        v = rng.normal(size=(3, 5))
        with pytest.warns(UserWarning):
            subspace_overlap(u, v, 2)
