import numpy as np
import pytest

from augsched.envs.backgrounds import background_texture
from augsched.envs.frames import dump_frames, read_ppm, write_ppm
from augsched.envs.gridworld import EnvConfig, EnvMode, EnvState, entity_mask, make_env, make_vec_env, render
from augsched.envs.levels import ACTIONS, RESERVED_COLORS, bfs_distances, generate_level, optimal_return, shortest_path
from augsched.utils.errors import EnvError


class TestLevels:
    """Procedural level generation"""

    def test_generation_is_deterministic(self):
        """The same id always yields the same level"""
        a = generate_level.__wrapped__(7, 8, 0.2, 0.1, None)
        b = generate_level.__wrapped__(7, 8, 0.2, 0.1, None)
        np.testing.assert_array_equal(a.walls, b.walls)
        assert (a.start, a.goal, a.distractors) == (b.start, b.goal, b.distractors)

    @pytest.mark.parametrize("level_id", range(20))
    def test_levels_are_solvable(self, level_id):
        """Start and goal differ and BFS connects them"""
        level = generate_level(level_id, 8, 0.2, 0.1)
        assert level.start != level.goal
        assert level.goal in bfs_distances(level.walls, level.start)
        assert level.walls[0].all() and level.walls[-1].all()

    def test_max_goal_distance_is_respected(self):
        """Bounded levels place the goal within the bound"""
        for level_id in range(10):
            level = generate_level(level_id, 8, 0.2, 0.1, 1)
            assert len(shortest_path(level)) == 1

    def test_optimal_return(self):
        """Discounted return of a shortest path is r * gamma^(p-1)"""
        level = generate_level(3, 8, 0.2, 0.1)
        p = len(shortest_path(level))
        assert optimal_return(level, 10.0, 0.9) == pytest.approx(10.0 * 0.9 ** (p - 1))

    def test_distractor_colors_avoid_reserved(self):
        """Distractors are never confusable with agent, goal or walls"""
        for level_id in range(10):
            for _, color in generate_level(level_id, 8, 0.2, 0.5).distractors:
                for reserved in RESERVED_COLORS:
                    assert np.max(np.abs(np.array(color) - np.array(reserved))) >= 0.2


class TestGridWorldEnv:
    """Dynamics, modes and rendering"""

    def test_oracle_reaches_goal_with_reward(self, tiny_env_config):
        """Following the shortest path ends the episode with reward_goal"""
        env = make_env(tiny_env_config, "easybg", 0)
        env.reset()
        result = None
        for action in shortest_path(env.state.level):
            result = env.step(action)
        assert result.done and result.info["success"]
        assert result.reward == tiny_env_config.reward_goal

    def test_blocked_move_stays_in_place(self, tiny_env_config):
        """Walking into a wall does not move the agent"""
        env = make_env(tiny_env_config, "easybg", 0)
        env.reset()
        start = env.state.agent
        blocked = [
            a for a, (dr, dc) in enumerate(ACTIONS)
            if not env.state.level.is_free((start[0] + dr, start[1] + dc))
        ]
        # every interior cell of a 4x4 grid touches the border
        assert blocked
        result = env.step(blocked[0])
        assert env.state.agent == start
        assert result.reward == tiny_env_config.step_penalty

    def test_episode_times_out(self, tiny_env_config):
        """Episodes end after max_episode_steps without success"""
        config = tiny_env_config.model_copy(update={"max_episode_steps": 1})
        env = make_env(config, "easybg", 0)
        env.reset()
        wrong = (shortest_path(env.state.level)[0] + 1) % 4
        result = env.step(wrong)
        assert result.done
        assert not result.info["success"]

    def test_invalid_action_and_finished_episode(self, tiny_env_config):
        """Out-of-range actions and steps after done raise EnvError"""
        env = make_env(tiny_env_config, "easybg", 0)
        env.reset()
        with pytest.raises(EnvError):
            env.step(4)
        for action in shortest_path(env.state.level):
            env.step(action)
        with pytest.raises(EnvError):
            env.step(0)

    def test_mode_splits(self, tiny_env_config):
        """test_lv uses unseen level ids; test_bg uses unseen backgrounds"""
        train = make_env(tiny_env_config, "easybg", 0)
        test_lv = make_env(tiny_env_config, "test-lv", 0)
        test_bg = make_env(tiny_env_config, EnvMode.TEST_BG, 0)
        assert set(train.level_ids()).isdisjoint(test_lv.level_ids())
        assert tiny_env_config.train_background not in test_bg.background_ids()
        assert list(test_bg.level_ids()) == list(train.level_ids())

    def test_test_bg_without_backgrounds(self, tiny_env_config):
        """A config with no held-out backgrounds cannot build test_bg envs"""
        config = tiny_env_config.model_copy(update={"num_test_backgrounds": 0})
        with pytest.raises(EnvError):
            make_env(config, "test_bg", 0)

    def test_backgrounds_change_only_empty_cells(self):
        """Two backgrounds render the same state identically on entity pixels"""
        config = EnvConfig(grid_size=8, image_size=16, wall_density=0.0, distractor_density=0.0)
        level = config.level(0)
        a = EnvState(level=level, background_id=0, agent=level.start)
        b = EnvState(level=level, background_id=1, agent=level.start)
        mask = entity_mask(a, config)
        img_a, img_b = render(a, config), render(b, config)
        np.testing.assert_array_equal(img_a[mask], img_b[mask])
        assert not np.array_equal(img_a[~mask], img_b[~mask])

    def test_render_is_quantized(self, tiny_env_config):
        """Every rendered value is a multiple of 1/255"""
        image = make_env(tiny_env_config, "test_bg", 3).reset()
        np.testing.assert_allclose(image * 255.0, np.rint(image * 255.0), atol=1e-9)

    def test_background_textures_are_read_only(self):
        """Cached textures cannot be modified by callers"""
        with pytest.raises(ValueError):
            background_texture(2, 8)[0, 0, 0] = 1.0


class TestVecEnv:
    """Batched stepping"""

    def test_auto_reset_and_step_count(self, tiny_env_config):
        """Finished envs are reset and total_steps counts every step"""
        envs = make_vec_env(tiny_env_config, "easybg", 3, seed=0)
        envs.reset()
        rng = np.random.default_rng(0)
        finished = []
        for _ in range(40):
            obs, rewards, dones, returns, _ = envs.step(rng.integers(0, 4, size=3))
            finished.extend(returns)
            assert obs.shape == (3, 8, 8, 3)
        assert envs.total_steps == 120
        assert finished, "at least one episode should end within 40 steps of a 16-step limit"

    def test_instances_are_reproducible(self, tiny_env_config):
        """Same seed and index give the same episode starts"""
        a = make_vec_env(tiny_env_config, "easybg", 2, seed=5).reset()
        b = make_vec_env(tiny_env_config, "easybg", 2, seed=5).reset()
        np.testing.assert_array_equal(a, b)


class TestFrames:
    """PPM frame dumps"""

    def test_ppm_round_trip(self, tiny_env_config, tmp_path):
        """Rendered frames survive a PPM round trip exactly"""
        image = make_env(tiny_env_config, "easybg", 0).reset()
        path = write_ppm(tmp_path / "f.ppm", image)
        np.testing.assert_allclose(read_ppm(path), image, atol=1e-12)

    def test_dump_frames_names(self, tiny_env_config, tmp_path):
        """One file per mode and index"""
        written = dump_frames(tiny_env_config, tmp_path, count=2)
        names = sorted(p.name for p in written)
        assert names == sorted(f"{m}_{i}.ppm" for m in ("easybg", "test_bg", "test_lv") for i in range(2))
