import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aopsolver import (
    Action,
    ChannelModel,
    ModelError,
    ProcessingOrigin,
    SystemConfig,
    age_after_processing,
    edge_execution_time,
    enumerate_actions,
    enumerate_states,
    lagrange_reward,
    local_processing_time,
    offloading_rate,
    path_loss_db,
    raw_area_reward,
    relaxed_reward,
    transition_distribution,
    transmission_time_from_rate,
)

EDGE, LOCAL = ProcessingOrigin.EDGE, ProcessingOrigin.LOCAL


def make_config(**kw):
    base = dict(
        input_size_bits=4.0e6,
        cycles=1.0e9,
        local_freq_hz=1.0e9,
        edge_freq_hz=20.0e9,
        bandwidth_hz=20.0e6,
        distance_km=0.1,
        tx_power_dbm=20.0,
        noise_power_dbm=-100.0,
        wait_grid_ms=(0.0, 200.0, 400.0, 600.0, 800.0),
        t_min_ms=1200.0,
    )
    base.update(kw)
    return SystemConfig(**base)


def make_channel(tx=(500.0, 1000.0, 2000.0)):
    matrix = [[0.85, 0.15, 0.0], [0.15, 0.7, 0.15], [0.0, 0.15, 0.85]]
    if len(tx) != 3:
        matrix = np.full((len(tx), len(tx)), 1.0 / len(tx))
    return ChannelModel.from_tx_times(tx, matrix)


class TestTimingFormulas:
    def test_local_processing_time(self):
        assert local_processing_time(make_config()) == pytest.approx(1000.0)
        assert local_processing_time(make_config(cycles=2.0e9)) == pytest.approx(2000.0)

    def test_zero_cycles_rejected(self):
        with pytest.raises(ModelError):
            make_config(cycles=0.0)

    def test_edge_execution_time(self):
        cfg = make_config()
        assert edge_execution_time(cfg) == pytest.approx(50.0)
        assert edge_execution_time(make_config(cycles=2.0e9)) == pytest.approx(100.0)
        same = make_config(edge_freq_hz=1.0e9)
        assert edge_execution_time(same) == local_processing_time(same)

    def test_path_loss(self):
        assert path_loss_db(0.1) == pytest.approx(104.0)
        assert path_loss_db(1.0) == pytest.approx(140.7)
        assert path_loss_db(10.0) == pytest.approx(177.4)
        with pytest.raises(ModelError):
            path_loss_db(0.0)

    def test_offloading_rate_default_link(self):
        # SNR = 10**(2 + 10 - 10.4) ~ 39.81, rate = 2e7 * log2(40.81)
        assert offloading_rate(make_config()) == pytest.approx(1.0702e8, rel=1e-3)

    def test_offloading_rate_unit_snr_gives_bandwidth(self):
        # received power (20 dBm - 140.7 dB) equals the noise floor
        cfg = make_config(distance_km=1.0, noise_power_dbm=20.0 - 140.7)
        assert offloading_rate(cfg) == pytest.approx(cfg.bandwidth_hz)

    def test_offloading_rate_vanishes_with_snr(self):
        cfg = make_config(noise_power_dbm=120.0)
        assert offloading_rate(cfg) < 1e-3 * cfg.bandwidth_hz

    def test_transmission_time_from_rate(self):
        assert transmission_time_from_rate(make_config()) == pytest.approx(37.4, rel=1e-2)

    def test_age_after_processing(self):
        cfg, chan = make_config(), make_channel()
        assert age_after_processing(EDGE, 0, cfg, chan) == pytest.approx(550.0)
        assert age_after_processing(EDGE, 2, cfg, chan) == pytest.approx(2050.0)
        for x in range(3):
            assert age_after_processing(LOCAL, x, cfg, chan) == pytest.approx(1000.0)


class TestValidation:
    def test_wait_grid_must_start_at_zero(self):
        with pytest.raises(ModelError):
            make_config(wait_grid_ms=(100.0, 200.0))

    def test_wait_grid_must_be_sorted_unique(self):
        with pytest.raises(ModelError):
            make_config(wait_grid_ms=(0.0, 200.0, 200.0))
        with pytest.raises(ModelError):
            make_config(wait_grid_ms=(0.0, 400.0, 200.0))

    def test_perturbation_bounds(self):
        with pytest.raises(ModelError):
            make_config(perturbation=0.0)
        with pytest.raises(ModelError):
            make_config(perturbation=0.5)

    def test_channel_rows_must_be_stochastic(self):
        with pytest.raises(ModelError):
            ChannelModel.from_tx_times((500.0, 1000.0), [[0.9, 0.2], [0.5, 0.5]])

    def test_channel_tx_times_strictly_increasing(self):
        with pytest.raises(ModelError):
            ChannelModel.from_tx_times((1000.0, 500.0), [[0.5, 0.5], [0.5, 0.5]])

    def test_age_collision_rejected(self):
        # edge age 50 + 950 collides with the 1000 ms local age
        chan = make_channel(tx=(950.0, 1000.0, 2000.0))
        with pytest.raises(ModelError, match="collision"):
            enumerate_states(make_config(), chan)


class TestStateSpace:
    def test_default_cardinality(self):
        space = enumerate_states(make_config(), make_channel())
        assert space.n_states == 120
        assert len(space.y_values_ms) == 4

    def test_minimal_cardinality(self):
        cfg = make_config(wait_grid_ms=(0.0,))
        chan = ChannelModel.from_tx_times((500.0,), [[1.0]])
        assert enumerate_states(cfg, chan).n_states == 4

    def test_counting_formula_example(self):
        cfg = make_config(wait_grid_ms=(0.0, 200.0, 400.0))
        chan = ChannelModel.from_tx_times((500.0, 1000.0), [[0.5, 0.5], [0.5, 0.5]])
        assert enumerate_states(cfg, chan).n_states == 36

    def test_index_roundtrip(self):
        space = enumerate_states(make_config(), make_channel())
        for i, state in enumerate(space.states):
            assert space.index(state) == i

    def test_action_space(self):
        actions = enumerate_actions(make_config())
        assert len(actions) == 10
        assert actions[0] == Action(0, EDGE)
        assert actions[1] == Action(0, LOCAL)


class TestTransitions:
    def test_channel_row_good_state(self):
        cfg, chan = make_config(), make_channel()
        space = enumerate_states(cfg, chan)
        state = space.states[space.index_of[(1, 0, EDGE, 0)]]
        succ = transition_distribution(state, Action(0, EDGE), cfg, chan, space)
        probs = {s.channel_index: p for s, p in succ}
        assert probs == pytest.approx({0: 0.85, 1: 0.15})
        assert all(s.cur_origin is EDGE for s, _ in succ)

    def test_channel_row_medium_state(self):
        cfg, chan = make_config(), make_channel()
        space = enumerate_states(cfg, chan)
        state = space.states[space.index_of[(0, 1, EDGE, 1)]]
        succ = transition_distribution(state, Action(1, EDGE), cfg, chan, space)
        probs = sorted(p for _, p in succ)
        assert probs == pytest.approx([0.15, 0.15, 0.7])

    def test_local_action_successors_share_age(self):
        cfg, chan = make_config(), make_channel()
        space = enumerate_states(cfg, chan)
        state = space.states[7]
        succ = transition_distribution(state, Action(2, LOCAL), cfg, chan, space)
        assert sum(p for _, p in succ) == pytest.approx(1.0, abs=1e-12)
        ages = {space.current_age_ms(s) for s, _ in succ}
        assert len(ages) == 1
        assert next(iter(ages)) == pytest.approx(1000.0)

    def test_successor_prev_age_is_current_age(self):
        cfg, chan = make_config(), make_channel()
        space = enumerate_states(cfg, chan)
        for state in space.states[::17]:
            cur_y_idx = space.y_index(state.cur_origin, state.channel_index)
            for succ, _ in transition_distribution(state, Action(3, EDGE), cfg, chan, space):
                assert succ.prev_age_index == cur_y_idx
                assert succ.prev_wait_index == 3


class TestRewards:
    def setup_method(self):
        self.cfg, self.chan = make_config(), make_channel()
        self.space = enumerate_states(self.cfg, self.chan)
        # prev age 1000 ms, prev wait 200 ms, current update edge over good channel
        self.state = self.space.states[self.space.index_of[(0, 1, EDGE, 0)]]

    def test_raw_area_hand_value(self):
        q = raw_area_reward(self.state, Action(0, EDGE), self.cfg, self.chan)
        assert q == pytest.approx(811_250.0)

    def test_alcw_steady_state_area(self):
        state = self.space.states[self.space.index_of[(0, 1, LOCAL, 0)]]
        q = raw_area_reward(state, Action(1, LOCAL), self.cfg, self.chan)
        assert q == pytest.approx(1.92e6)

    def test_relaxed_hand_values(self):
        state = self.space.states[self.space.index_of[(0, 1, LOCAL, 0)]]
        assert relaxed_reward(state, Action(1, LOCAL), self.cfg, self.chan) == pytest.approx(1600.0)
        assert relaxed_reward(self.state, Action(0, EDGE), self.cfg, self.chan) == pytest.approx(1475.0)

    def test_relaxed_equal_cycles(self):
        # prev cycle 1000 + 0 and current cycle 1000 + 0: ratio term is exact
        state = self.space.states[self.space.index_of[(0, 0, LOCAL, 1)]]
        value = relaxed_reward(state, Action(0, LOCAL), self.cfg, self.chan)
        assert value == pytest.approx(1000.0 + 0.5 * 1000.0)

    def test_lagrange_values(self):
        state = self.space.states[self.space.index_of[(0, 1, LOCAL, 0)]]
        assert lagrange_reward(state, Action(1, LOCAL), 1.0, self.cfg, self.chan) == pytest.approx(400.0)
        assert lagrange_reward(self.state, Action(0, EDGE), 0.5, self.cfg, self.chan) == pytest.approx(1200.0)
        with pytest.raises(ModelError):
            lagrange_reward(self.state, Action(0, EDGE), -0.1, self.cfg, self.chan)


class TestDenseModel:
    def test_dense_tables_match_lazy_functions(self, model):
        cfg, chan, space = model.cfg, model.chan, model.space
        rng = np.random.default_rng(0)
        for _ in range(50):
            si = int(rng.integers(model.n_states))
            ai = int(rng.integers(model.n_actions))
            state, action = space.states[si], model.actions[ai]
            assert model.relaxed[si, ai] == relaxed_reward(state, action, cfg, chan)
            dense_row = model.transitions[ai, si]
            sparse = {space.index_of[s]: p for s, p in
                      transition_distribution(state, action, cfg, chan, space)}
            for sj, p in sparse.items():
                assert dense_row[sj] == p
            assert dense_row.sum() == pytest.approx(1.0, abs=1e-12)

    def test_lagrange_table_identity_at_zero(self, model):
        assert np.array_equal(model.lagrange_rewards(0.0), model.relaxed)


# ---------------------------------------------------------------------------
# property tests on randomized small configurations


@st.composite
def small_setups(draw):
    n_chan = draw(st.integers(1, 3))
    base = draw(st.floats(50.0, 400.0))
    steps = [draw(st.floats(10.0, 300.0)) for _ in range(n_chan - 1)]
    tx = [base]
    for s in steps:
        tx.append(tx[-1] + s)
    rows = []
    for _ in range(n_chan):
        row = [draw(st.floats(0.05, 1.0)) for _ in range(n_chan)]
        total = sum(row)
        rows.append([v / total for v in row])
    n_wait = draw(st.integers(1, 4))
    waits = [0.0]
    for _ in range(n_wait - 1):
        waits.append(waits[-1] + draw(st.floats(10.0, 500.0)))
    cycles = draw(st.floats(0.5e9, 3e9))
    local_f = draw(st.floats(0.5e9, 2e9))
    edge_f = draw(st.floats(5e9, 40e9))
    cfg = make_config(
        cycles=cycles, local_freq_hz=local_f, edge_freq_hz=edge_f,
        wait_grid_ms=tuple(waits),
    )
    chan = ChannelModel.from_tx_times(tuple(tx), rows)
    return cfg, chan


@given(small_setups())
@settings(max_examples=40, deadline=None)
def test_cardinality_formula_holds(setup):
    cfg, chan = setup
    try:
        space = enumerate_states(cfg, chan)
    except ModelError:
        return  # age collision: rejection is the contract
    m1 = chan.n_states
    assert space.n_states == (m1 + 1) * len(cfg.wait_grid_ms) * 2 * m1


@given(small_setups(), st.integers(0, 10_000), st.integers(0, 100),
       st.floats(0.0, 3.0))
@settings(max_examples=40, deadline=None)
def test_reward_identities(setup, state_pick, action_pick, lam):
    cfg, chan = setup
    try:
        space = enumerate_states(cfg, chan)
    except ModelError:
        return
    actions = enumerate_actions(cfg)
    state = space.states[state_pick % space.n_states]
    action = actions[action_pick % len(actions)]
    cycle = space.current_age_ms(state) + cfg.wait_grid_ms[action.wait_index]
    raw = raw_area_reward(state, action, cfg, chan)
    relaxed = relaxed_reward(state, action, cfg, chan)
    assert raw == pytest.approx(relaxed * cycle, rel=1e-12)
    assert lagrange_reward(state, action, 0.0, cfg, chan) == relaxed
    assert lagrange_reward(state, action, lam, cfg, chan) == pytest.approx(
        relaxed - lam * cycle, rel=1e-12
    )


@given(small_setups())
@settings(max_examples=30, deadline=None)
def test_transition_rows_are_distributions(setup):
    cfg, chan = setup
    try:
        space = enumerate_states(cfg, chan)
    except ModelError:
        return
    actions = enumerate_actions(cfg)
    for state in space.states[:: max(1, space.n_states // 10)]:
        for action in actions:
            succ = transition_distribution(state, action, cfg, chan, space)
            assert all(p > 0 for _, p in succ)
            assert sum(p for _, p in succ) == pytest.approx(1.0, abs=1e-12)


@given(small_setups())
@settings(max_examples=30, deadline=None)
def test_age_coupling_invariant(setup):
    cfg, chan = setup
    try:
        space = enumerate_states(cfg, chan)
    except ModelError:
        return
    t_l = local_processing_time(cfg)
    t_ex = edge_execution_time(cfg)
    for state in space.states:
        age = space.current_age_ms(state)
        if state.cur_origin is LOCAL:
            assert age == t_l
        else:
            assert age == t_ex + chan.tx_times_ms[state.channel_index]
