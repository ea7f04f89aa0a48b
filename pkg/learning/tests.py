"""
Tests for learning app.
"""

import json
import math

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase, TestCase

from graphs.services import (
    NO_LATENT,
    FactorEdge,
    PairLabels,
    build_graph,
    default_schema,
    schema,
)
from graphs.structures import (
    Correspondence,
    GraphNode,
    IntraEdge,
    LabelMap,
    LabelSpace,
    ModalitySpec,
)
from inference.exceptions import NumericalError
from inference.oracles import brute_force_marginals
from inference.services import trw_marginals
from inference.structures import TrwConfig, marginals_from_arrays
from inference.tasks import label_sample
from potentials.exceptions import ShapeError
from potentials.services import from_vector, init_parameters, learnable_count, to_vector
from potentials.structures import unary_key

from .exceptions import GroundTruthError
from .models import TrainingRun
from .services import (
    block_scaled_direction,
    build_sample,
    clique_marginal_loss,
    derive_latent_labels,
    empirical_risk,
    latent_gt,
    preset_tables,
    risk_and_gradient,
    risk_gradient,
    train,
)
from .structures import FIXED_STEP, TrainConfig, TrainSample

LABELS = LabelSpace(('car', 'road'))


def two_modality_graph(flip=True, with_gt=True, cuttable=True):
    """
    Two nodes per modality joined by two correspondences; the second one
    links disagreeing labels when `flip` is set.
    """
    rng = np.random.default_rng(3)
    modalities = [ModalitySpec('2d', LABELS, feature_dim=2),
                  ModalitySpec('3d', LABELS, feature_dim=2)]
    gts = [1, 2, 1, 1 if flip else 2] if with_gt else [1, None, 1, 2]
    nodes = [
        GraphNode(0, '2d', rng.normal(size=2), gt=gts[0]),
        GraphNode(1, '2d', rng.normal(size=2), gt=gts[1]),
        GraphNode(2, '3d', rng.normal(size=2), gt=gts[2]),
        GraphNode(3, '3d', rng.normal(size=2), gt=gts[3]),
    ]
    edges = [IntraEdge(0, 1, rng.random(1)), IntraEdge(2, 3, rng.random(1))]
    links = [Correspondence(0, 2, 0.7), Correspondence(1, 3, 0.4, cuttable=cuttable)]
    return build_graph(modalities, nodes, edges, links)


def separable_graph():
    """Single-modality chain whose one-hot features reveal every label."""
    modalities = [ModalitySpec('2d', LABELS, feature_dim=2)]
    labels = [1, 1, 2, 2, 1, 2]
    nodes = [GraphNode(i, '2d', np.eye(2)[label - 1], gt=label) for i, label in enumerate(labels)]
    edges = [IntraEdge(i, i + 1, np.array([1.0])) for i in range(len(labels) - 1)]
    return build_graph(modalities, nodes, edges)


def random_bundle(sample, seed=0, scale=0.3, mode='latent'):
    params = init_parameters(schema(sample.graph), mode=mode)
    rng = np.random.default_rng(seed)
    return from_vector(params, rng.normal(scale=scale, size=learnable_count(params)))


class LatentGtTest(SimpleTestCase):
    """
    Test cases for the latent ground-truth agreement rule.
    """

    def test_agreement_and_cut(self):
        """Test (3, 3) -> 3 and (2, 5) -> 0."""
        self.assertEqual(latent_gt(3, 3), 3)
        self.assertEqual(latent_gt(2, 5), 0)

    def test_exhaustive_small_spaces(self):
        """Test every label pair for label counts 1 to 5."""
        for size in range(1, 6):
            space = LabelSpace(tuple(f"class{i}" for i in range(1, size + 1)))
            labels = PairLabels(ModalitySpec('2d', space, feature_dim=1),
                                ModalitySpec('3d', space, feature_dim=1))
            for y_a in range(1, size + 1):
                for y_b in range(1, size + 1):
                    with self.subTest(size=size, y_a=y_a, y_b=y_b):
                        self.assertEqual(latent_gt(y_a, y_b), y_a * (y_a == y_b))
                        self.assertEqual(latent_gt(y_a, y_b, labels=labels), y_a * (y_a == y_b))
                        if y_a == y_b:
                            self.assertEqual(latent_gt(y_a, y_b, cuttable=False), y_a)

    def test_non_cuttable_contradiction(self):
        """Test disagreeing labels on a non-cuttable link raise."""
        with self.assertRaises(GroundTruthError):
            latent_gt(1, 2, cuttable=False)
        self.assertEqual(latent_gt(2, 2, cuttable=False), 2)

    def test_mapped_pair(self):
        """Test compatibility through a label map returns the source label."""
        semantic = ModalitySpec('sem', LabelSpace(('car', 'road', 'tree')), feature_dim=1)
        geometric = ModalitySpec('geo', LabelSpace(('vertical', 'horizontal')), feature_dim=1)
        mapping = LabelMap('sem', 'geo', {'car': 'vertical', 'road': 'horizontal',
                                          'tree': 'vertical'})
        labels = PairLabels(semantic, geometric, mapping)
        self.assertEqual(latent_gt(1, 1, labels=labels), 1)
        self.assertEqual(latent_gt(3, 1, labels=labels), 3)
        self.assertEqual(latent_gt(2, 1, labels=labels), 0)
        with self.assertRaises(GroundTruthError):
            latent_gt(2, 1, cuttable=False, labels=labels)


class BuildSampleTest(SimpleTestCase):
    """
    Test cases for build_sample and derive_latent_labels.
    """

    def test_latent_labels_follow_endpoints(self):
        """Test agreeing links keep the label and disagreeing links are cut."""
        sample = build_sample(two_modality_graph(), 'scene')
        self.assertTrue(sample.graph.augmented)
        self.assertEqual([l.gt for l in sample.graph.latent_nodes], [1, 0])
        self.assertEqual(sample.sample_id, 'scene')

    def test_missing_endpoint_label(self):
        """Test a link with an unlabeled endpoint gets no latent label."""
        graph = two_modality_graph(with_gt=False)
        self.assertEqual(derive_latent_labels(graph), [1, None])
        sample = build_sample(graph)
        self.assertEqual(sample.missing_ground_truth(), [1])

    def test_non_cuttable_disagreement(self):
        """Test a contradiction on a non-cuttable link names both endpoints."""
        with self.assertRaises(GroundTruthError) as ctx:
            build_sample(two_modality_graph(cuttable=False))
        self.assertEqual(ctx.exception.ids, (1, 3))

    def test_relabels_augmented_graph(self):
        """Test an already augmented graph gets its latent labels refreshed."""
        sample = build_sample(two_modality_graph())
        again = build_sample(sample.graph)
        self.assertEqual([l.gt for l in again.graph.latent_nodes], [1, 0])


class CliqueMarginalLossTest(SimpleTestCase):
    """
    Test cases for clique_marginal_loss.
    """

    def setUp(self):
        self.sample = TrainSample(separable_graph(), 'chain')

    def test_perfect_marginals(self):
        """Test marginals concentrated on the ground truth give zero loss."""
        graph = self.sample.graph
        gts = [node.gt for node in graph.nodes[:2]]
        nodes = [np.eye(2)[g - 1] for g in gts]
        joint = np.zeros((2, 2))
        joint[gts[0] - 1, gts[1] - 1] = 1.0
        marginals = marginals_from_arrays(nodes, [joint], [FactorEdge('intra', 0, 1, 0)], 0.0,
                                          variable_ids=[0, 1])
        self.assertEqual(float(clique_marginal_loss(marginals, self.sample)), 0.0)

    def test_zero_mass_is_floored(self):
        """Test a zero belief at the ground truth costs -log(1e-300)."""
        joint = np.array([[0.0, 1.0], [0.0, 0.0]])
        marginals = marginals_from_arrays([np.array([1.0, 0.0]), np.array([0.0, 1.0])], [joint],
                                          [FactorEdge('intra', 0, 1, 0)], 0.0,
                                          variable_ids=[0, 1])
        self.assertAlmostEqual(float(clique_marginal_loss(marginals, self.sample)),
                               -math.log(1e-300), places=6)

    def test_uniform_marginals(self):
        """Test zero parameters on a binary graph cost ln 4 per clique."""
        sample = build_sample(two_modality_graph())
        params = init_parameters(schema(sample.graph), mode=NO_LATENT)
        config = TrainConfig(l2=0.0, trw=TrwConfig(iterations=5))
        cliques = len(preset_tables(sample, params).edges)
        self.assertEqual(cliques, 4)
        self.assertAlmostEqual(empirical_risk(params, [sample], config),
                               cliques * math.log(4.0), places=9)

    def test_matches_enumeration(self):
        """Test the loss on exact marginals equals a hand-rolled sum."""
        sample = build_sample(two_modality_graph())
        params = random_bundle(sample, seed=5, scale=1.0)
        tables = preset_tables(sample, params)
        marginals = brute_force_marginals(tables)
        truth = sample.ground_truth()
        expected = 0.0
        for e, edge in enumerate(marginals.edges):
            s = truth[marginals.variable_ids[edge.s]] - marginals.offsets[edge.s]
            t = truth[marginals.variable_ids[edge.t]] - marginals.offsets[edge.t]
            expected -= math.log(max(marginals.edge(e)[s, t], 1e-300))
        self.assertAlmostEqual(float(clique_marginal_loss(marginals, sample)), expected,
                               places=8)
        self.assertGreaterEqual(expected, 0.0)

    def test_graph_mismatch(self):
        """Test marginals of another graph are rejected."""
        marginals = marginals_from_arrays([np.array([0.5, 0.5])], [], [], 0.0,
                                          variable_ids=[99])
        with self.assertRaises(ShapeError):
            clique_marginal_loss(marginals, self.sample)

    def test_missing_ground_truth(self):
        """Test an unlabeled node is reported by id."""
        sample = build_sample(two_modality_graph(with_gt=False))
        params = init_parameters(schema(sample.graph), mode=NO_LATENT)
        marginals = trw_marginals(preset_tables(sample, params), TrwConfig(iterations=2))
        with self.assertRaises(GroundTruthError) as ctx:
            clique_marginal_loss(marginals, sample)
        self.assertEqual(ctx.exception.ids, (1,))


class PresetTablesTest(SimpleTestCase):
    """
    Test cases for preset_tables.
    """

    def setUp(self):
        self.sample = build_sample(two_modality_graph())

    def test_latent_and_direct_cliques(self):
        """Test latent grounding adds two cliques per link, direct grounding one."""
        latent = preset_tables(self.sample, init_parameters(schema(self.sample.graph)))
        direct = preset_tables(self.sample,
                               init_parameters(schema(self.sample.graph), mode=NO_LATENT))
        self.assertEqual(latent.variable_count, 6)
        self.assertEqual(len(latent.edges), 2 + 4)
        self.assertEqual(direct.variable_count, 4)
        self.assertEqual([e.kind for e in direct.edges], ['intra', 'intra', 'inter', 'inter'])

    def test_single_modality_bundle(self):
        """Test a one-modality bundle only sees that modality."""
        spec = self.sample.graph.modality('2d')
        params = init_parameters([spec], mode=NO_LATENT)
        tables = preset_tables(self.sample, params, preset='single-domain')
        self.assertEqual(tables.variable_ids, [0, 1])
        self.assertEqual(len(tables.edges), 1)

    def test_preset_mode_mismatch(self):
        """Test a preset grounding in another mode than the bundle is rejected."""
        params = init_parameters(schema(self.sample.graph))
        with self.assertRaises(ShapeError):
            preset_tables(self.sample, params, preset='no-latent')
        with self.assertRaises(ValueError):
            preset_tables(self.sample, params, preset='mystery')


class RiskTest(SimpleTestCase):
    """
    Test cases for empirical_risk.
    """

    def setUp(self):
        self.sample = build_sample(two_modality_graph(), 'a')
        self.other = build_sample(two_modality_graph(flip=False), 'b')
        self.config = TrainConfig(l2=0.0, trw=TrwConfig(iterations=4))

    def test_empty_sample_set(self):
        """Test the risk of no samples is the regularizer."""
        params = random_bundle(self.sample)
        config = TrainConfig(l2=0.5)
        expected = 0.5 * float(np.sum(to_vector(params) ** 2))
        self.assertAlmostEqual(empirical_risk(params, [], config), expected, places=12)

    def test_additivity(self):
        """Test the risk of two samples is the sum of their risks."""
        params = random_bundle(self.sample, seed=2)
        both = empirical_risk(params, [self.sample, self.other], self.config)
        parts = (empirical_risk(params, [self.sample], self.config)
                 + empirical_risk(params, [self.other], self.config))
        self.assertAlmostEqual(both, parts, places=10)

    def test_penalty_invariance(self):
        """Test doubling the penalty barely moves the risk at zero parameters."""
        params = init_parameters(schema(self.sample.graph))
        low = empirical_risk(params, [self.sample], self.config)
        high = empirical_risk(params.with_penalty(2000.0), [self.sample], self.config)
        self.assertLess(abs(low - high), 1e-6)


class RiskGradientTest(SimpleTestCase):
    """
    Test cases for risk_gradient.
    """

    def setUp(self):
        self.sample = build_sample(two_modality_graph(), 'grad')
        self.config = TrainConfig(l2=1e-3, trw=TrwConfig(iterations=5))

    def test_finite_differences(self):
        """Test the gradient through unrolled rounds against central differences."""
        params = random_bundle(self.sample, seed=11)
        theta = to_vector(params)
        analytic = risk_gradient(params, [self.sample], self.config).vector
        numeric = np.zeros_like(theta)
        h = 1e-5
        for k in range(theta.shape[0]):
            step = np.zeros_like(theta)
            step[k] = h
            up = empirical_risk(from_vector(params, theta + step), [self.sample], self.config)
            down = empirical_risk(from_vector(params, theta - step), [self.sample], self.config)
            numeric[k] = (up - down) / (2 * h)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-6)

    def test_no_latent_finite_differences(self):
        """Test the direct-link gradient against central differences."""
        params = random_bundle(self.sample, seed=4, mode=NO_LATENT)
        theta = to_vector(params)
        analytic = risk_gradient(params, [self.sample], self.config).vector
        numeric = np.zeros_like(theta)
        h = 1e-5
        for k in range(theta.shape[0]):
            step = np.zeros_like(theta)
            step[k] = h
            up = empirical_risk(from_vector(params, theta + step), [self.sample], self.config)
            down = empirical_risk(from_vector(params, theta - step), [self.sample], self.config)
            numeric[k] = (up - down) / (2 * h)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-6)

    def test_regularizer_only(self):
        """Test no samples give the gradient 2 lambda theta."""
        params = random_bundle(self.sample, seed=1)
        gradient = risk_gradient(params, [], TrainConfig(l2=0.25))
        np.testing.assert_allclose(gradient.vector, 0.5 * to_vector(params), atol=1e-14)

    def test_unary_column_sums_vanish(self):
        """Test shifting all unary costs of a node leaves the loss unchanged."""
        params = init_parameters(schema(self.sample.graph))
        gradient = risk_gradient(params, [self.sample], self.config)
        for modality_id in ('2d', '3d'):
            column_sums = gradient.blocks[unary_key(modality_id)].sum(axis=0)
            np.testing.assert_allclose(column_sums, 0.0, atol=1e-10)

    def test_gradient_shapes(self):
        """Test every block of the gradient matches the bundle."""
        params = random_bundle(self.sample)
        risk, gradient = risk_and_gradient(params, [self.sample], self.config)
        self.assertEqual(list(gradient.blocks), params.block_names())
        for name, block in gradient.blocks.items():
            self.assertEqual(block.shape, params.blocks[name].shape)
        self.assertAlmostEqual(risk, empirical_risk(params, [self.sample], self.config),
                               places=10)


class BlockScaledDirectionTest(SimpleTestCase):
    """
    Test cases for the search direction of the line-search optimizer.
    """

    def setUp(self):
        self.params = init_parameters(schema(two_modality_graph()))

    def test_steepest_entry_of_each_block_is_one(self):
        """Test each block is divided by its own largest magnitude."""
        rng = np.random.default_rng(4)
        scales = rng.uniform(1e-3, 1e3, size=len(self.params.blocks))
        grad = np.concatenate([
            scale * rng.normal(size=block.size)
            for scale, block in zip(scales, self.params.blocks.values())
        ])
        direction = block_scaled_direction(self.params, grad)
        start = 0
        for block in self.params.blocks.values():
            part, raw = direction[start:start + block.size], grad[start:start + block.size]
            self.assertAlmostEqual(float(np.max(np.abs(part))), 1.0, places=12)
            np.testing.assert_allclose(part * np.max(np.abs(raw)), raw)
            start += block.size
        self.assertGreater(float(grad @ direction), 0.0)

    def test_zero_and_negligible_blocks_stay_still(self):
        """Test blocks without a real gradient get no direction."""
        grad = np.zeros(learnable_count(self.params))
        np.testing.assert_array_equal(block_scaled_direction(self.params, grad), grad)
        sizes = [block.size for block in self.params.blocks.values()]
        grad[0] = 5.0
        grad[sizes[0]] = 1e-14
        direction = block_scaled_direction(self.params, grad)
        self.assertEqual(direction[0], 1.0)
        self.assertEqual(float(np.abs(direction[sizes[0]:]).sum()), 0.0)


class TrainConfigTest(SimpleTestCase):
    """
    Test cases for TrainConfig.
    """

    def test_validation(self):
        """Test invalid iteration counts, lambda and optimizer are rejected."""
        with self.assertRaises(ValueError):
            TrainConfig(outer_iterations=0)
        with self.assertRaises(ValueError):
            TrainConfig(l2=-1.0)
        with self.assertRaises(ValueError):
            TrainConfig(optimizer='lbfgs')

    def test_from_settings(self):
        """Test defaults come from settings and the training truncation depth."""
        config = TrainConfig.from_settings(outer_iterations=3, l2=None)
        self.assertEqual(config.outer_iterations, 3)
        self.assertEqual(config.l2, settings.MMCRF['LAMBDA'])
        self.assertEqual(config.trw.iterations, settings.MMCRF['LEARNING_ITERATIONS'])
        self.assertEqual(TrainConfig.from_settings(iterations=2).trw.iterations, 2)
        self.assertEqual(config.seed, settings.MMCRF['SEED'])
        self.assertFalse(config.random_init)


class TrainTest(SimpleTestCase):
    """
    Test cases for train.
    """

    def setUp(self):
        self.config = TrainConfig(outer_iterations=5, l2=0.0, trw=TrwConfig(iterations=10))

    def test_separable_sample(self):
        """Test training drives the loss of a separable sample below a tenth."""
        sample = build_sample(separable_graph(), 'separable')
        params = init_parameters(schema(sample.graph), mode=NO_LATENT)
        initial = empirical_risk(params, [sample], self.config)
        self.assertAlmostEqual(initial, 5 * math.log(4.0), places=9)
        result = train(params, [sample], self.config)
        self.assertLess(empirical_risk(result.params, [sample], self.config), 0.1 * initial)

    def test_best_so_far(self):
        """Test the returned risk is the minimum of the trace."""
        sample = build_sample(two_modality_graph())
        result = train(init_parameters(schema(sample.graph)), [sample],
                       TrainConfig(outer_iterations=3, trw=TrwConfig(iterations=4)))
        risks = [entry['risk'] for entry in result.trace]
        self.assertEqual(result.trace[0]['iteration'], 0)
        self.assertLessEqual(result.best_risk, risks[0])
        self.assertEqual(result.best_risk, min(risks))
        self.assertLessEqual(len(result.trace), 4)

    def test_deterministic(self):
        """Test two runs give identical traces and parameters."""
        sample = build_sample(two_modality_graph())
        params = init_parameters(schema(sample.graph), seed=3, random_init=True)
        config = TrainConfig(outer_iterations=2, trw=TrwConfig(iterations=3))
        first = train(params, [sample], config)
        second = train(params, [sample], config)
        self.assertEqual(first.trace, second.trace)
        np.testing.assert_array_equal(to_vector(first.params), to_vector(second.params))

    def test_seeded_random_init(self):
        """Test the seed drives the starting jitter only when random_init is set."""
        sample = build_sample(two_modality_graph())
        params = init_parameters(schema(sample.graph))

        def run(**options):
            return train(params, [sample],
                         TrainConfig(outer_iterations=1, trw=TrwConfig(iterations=3), **options))

        first = run(seed=5, random_init=True)
        self.assertEqual(first.trace, run(seed=5, random_init=True).trace)
        self.assertNotEqual(first.trace[0]['risk'], run(seed=6, random_init=True).trace[0]['risk'])
        self.assertNotEqual(first.trace[0]['risk'], run(seed=5).trace[0]['risk'])
        self.assertEqual(run(seed=5).trace, run(seed=6).trace)
        self.assertAlmostEqual(run(seed=5).trace[0]['risk'],
                               empirical_risk(params, [sample], TrainConfig(trw=TrwConfig(iterations=3))),
                               places=9)

    def test_fixed_step(self):
        """Test fixed-step descent records one entry per iteration."""
        sample = build_sample(separable_graph())
        params = init_parameters(schema(sample.graph), mode=NO_LATENT)
        config = TrainConfig(outer_iterations=3, optimizer=FIXED_STEP, step_size=0.1,
                             trw=TrwConfig(iterations=5))
        result = train(params, [sample], config)
        self.assertEqual([e['iteration'] for e in result.trace], [0, 1, 2, 3])
        self.assertTrue(all(e['step_size'] == 0.1 for e in result.trace[1:]))

    def test_trace_lines(self):
        """Test each iteration is logged as one JSON line."""
        sample = build_sample(separable_graph())
        params = init_parameters(schema(sample.graph), mode=NO_LATENT)
        config = TrainConfig(outer_iterations=1, trw=TrwConfig(iterations=3))
        with self.assertLogs('learning.trace', level='INFO') as logs:
            train(params, [sample], config)
        entries = [json.loads(record.getMessage()) for record in logs.records]
        self.assertEqual(entries[0]['iteration'], 0)
        self.assertEqual(set(entries[0]),
                         {'iteration', 'risk', 'step_size', 'gradient_norm', 'accepted'})

    def test_missing_ground_truth(self):
        """Test training refuses unlabeled nodes."""
        sample = build_sample(two_modality_graph(with_gt=False))
        with self.assertRaises(GroundTruthError):
            train(init_parameters(schema(sample.graph)), [sample], self.config)

    def test_no_samples(self):
        """Test training needs at least one sample."""
        sample = build_sample(separable_graph())
        with self.assertRaises(ValueError):
            train(init_parameters(schema(sample.graph), mode=NO_LATENT), [], self.config)

    def test_non_finite_initial_risk(self):
        """Test an infinite parameter aborts with an empty trace."""
        sample = build_sample(separable_graph())
        params = init_parameters(schema(sample.graph), mode=NO_LATENT)
        theta = to_vector(params)
        theta[0] = np.inf
        with self.assertRaises(NumericalError) as ctx:
            train(from_vector(params, theta), [sample], self.config)
        self.assertEqual(ctx.exception.trace, [])


def connected_frames_graph():
    """Two frames of one camera linked region by region and to a point cloud."""
    modalities = [ModalitySpec('2d', LABELS, feature_dim=2),
                  ModalitySpec('3d', LABELS, feature_dim=2)]
    truth = [1, 2, 1, 2]
    nodes = [GraphNode(i, '2d', np.eye(2)[y - 1], gt=y, instance=i // 2)
             for i, y in enumerate(truth)]
    nodes += [GraphNode(4 + i, '3d', np.eye(2)[y - 1], gt=y) for i, y in enumerate(truth[:2])]
    edges = [IntraEdge(0, 1, np.ones(1)), IntraEdge(2, 3, np.ones(1)), IntraEdge(4, 5, np.ones(1))]
    links = [Correspondence(0, 2, 0.9), Correspondence(1, 3, 0.8),
             Correspondence(0, 4, 0.6), Correspondence(3, 5, 0.5)]
    return build_graph(modalities, nodes, edges, links)


class ConnectedFramesTest(SimpleTestCase):
    """
    Test cases for correspondences between instances of one modality.
    """

    def setUp(self):
        self.sample = build_sample(connected_frames_graph(), 'frames')

    def test_schema_links_frames(self):
        """Test the frame pair is part of the graph and connected schemas."""
        pairs = [(pair.a, pair.b) for pair in schema(self.sample.graph).pairs]
        self.assertEqual(pairs, [('2d', '2d'), ('2d', '3d')])
        connected = default_schema(self.sample.graph.modalities, connected=['2d'])
        self.assertEqual(init_parameters(connected).block_names(),
                         init_parameters(self.sample.graph).block_names())
        with self.assertRaises(ValueError):
            default_schema(self.sample.graph.modalities, connected=['lidar'])

    def test_modality_list_lacks_frame_pair(self):
        """Test a bundle shaped from specs alone cannot ground frame links."""
        with self.assertRaises(ShapeError):
            preset_tables(self.sample, init_parameters(self.sample.graph.modalities))

    def test_ground_train_and_label(self):
        """Test a two-frame scene grounds, trains and labels end to end."""
        params = init_parameters(self.sample.graph)
        self.assertEqual(len(preset_tables(self.sample, params).edges), 3 + 2 * 4)
        result = train(params, [self.sample],
                       TrainConfig(outer_iterations=2, trw=TrwConfig(iterations=5)))
        self.assertLess(result.best_risk, result.trace[0]['risk'])
        labeling = label_sample(self.sample, result.params, 'latent', TrwConfig(iterations=5))
        self.assertEqual(sorted(labeling.nodes), list(range(6)))
        self.assertEqual([d.correspondence for d in labeling.decisions], [0, 1, 2, 3])


class TrainingRunModelTest(TestCase):
    """
    Test cases for the TrainingRun ledger.
    """

    def test_create_run(self):
        """Test a run is stored with its trace."""
        run = TrainingRun.objects.create(
            preset='latent', scene_count=2, options={'l2': 0.001},
            risk_trace=[{'iteration': 0, 'risk': 1.5}], best_risk=1.5, status='completed',
        )
        stored = TrainingRun.objects.get(id=run.id)
        self.assertEqual(stored.risk_trace[0]['risk'], 1.5)
        self.assertIn('latent', str(stored))
