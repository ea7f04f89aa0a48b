"""
Tests for potentials app.
"""

import tempfile
from pathlib import Path

import numpy as np
import torch
from django.test import SimpleTestCase

from graphs.services import NO_LATENT, augment_with_latent, build_graph, default_schema, schema
from graphs.structures import Correspondence, GraphNode, IntraEdge, LabelSpace, ModalitySpec

from .exceptions import ModelFileError, ShapeError
from .serializers import dumps_model, load_model, loads_model, save_model
from .services import (
    edge_feature_intra,
    energy_terms,
    from_vector,
    ground,
    init_parameters,
    inter_pairwise_cost,
    intra_pairwise_cost,
    latent_pairwise_cost,
    learnable_count,
    nominal_shapes,
    to_vector,
    unary_cost,
)
from .structures import EdgeFeaturePolicy

DATA61_NAMES = ('grass', 'road', 'sidewalk', 'building', 'vehicle', 'tree trunk', 'pole',
                'sign', 'post', 'barrier', 'tree leaves', 'bush', 'wire', 'sky')


def data61_like():
    return [
        ModalitySpec('2d', LabelSpace(DATA61_NAMES), feature_dim=23),
        ModalitySpec('3d', LabelSpace(DATA61_NAMES[:13]), feature_dim=17),
    ]


def cmu_like():
    names = tuple(f"class{i}" for i in range(19))
    return [
        ModalitySpec('2d', LabelSpace(names), feature_dim=28),
        ModalitySpec('3d', LabelSpace(names), feature_dim=23),
    ]


def mixed_graph():
    """Five regular nodes over two modalities with three correspondences."""
    rng = np.random.default_rng(7)
    modalities = [
        ModalitySpec('2d', LabelSpace(('a', 'b', 'c')), feature_dim=3),
        ModalitySpec('3d', LabelSpace(('a', 'b')), feature_dim=2),
    ]
    nodes = [
        GraphNode(0, '2d', rng.normal(size=3)),
        GraphNode(1, '2d', rng.normal(size=3)),
        GraphNode(2, '2d', rng.normal(size=3)),
        GraphNode(3, '3d', rng.normal(size=2)),
        GraphNode(4, '3d', rng.normal(size=2)),
    ]
    edges = [IntraEdge(0, 1, rng.random(1)), IntraEdge(1, 2, rng.random(1)),
             IntraEdge(3, 4, rng.random(1))]
    links = [Correspondence(0, 3, 0.4), Correspondence(2, 4, 0.9),
             Correspondence(1, 4, 0.3, cuttable=False)]
    return build_graph(modalities, nodes, edges, links)


def random_bundle(graph, mode='latent', seed=0, policy=None):
    bundle = init_parameters(schema(graph), mode=mode, penalty=1000.0, policy=policy)
    rng = np.random.default_rng(seed)
    return from_vector(bundle, rng.normal(size=learnable_count(bundle)))


class UnaryCostTest(SimpleTestCase):
    """
    Test cases for unary_cost.
    """

    def test_dot_product(self):
        """Test entry l is row l of A times x."""
        cost = unary_cost([[1.0, 0.0], [0.0, 2.0]], [3.0, 1.0])
        np.testing.assert_array_equal(cost.numpy(), [3.0, 2.0])

    def test_zero_matrix(self):
        """Test a zero matrix gives zero costs."""
        cost = unary_cost(np.zeros((4, 3)), [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(cost.numpy(), np.zeros(4))

    def test_matches_row_by_row(self):
        """Test against a naive row-by-row evaluation."""
        rng = np.random.default_rng(1)
        A, x = rng.normal(size=(5, 7)), rng.normal(size=7)
        expected = [sum(A[l, d] * x[d] for d in range(7)) for l in range(5)]
        np.testing.assert_allclose(unary_cost(A, x).numpy(), expected, rtol=1e-12)

    def test_dimension_mismatch(self):
        """Test mismatched columns are rejected."""
        with self.assertRaises(ShapeError):
            unary_cost(np.zeros((2, 3)), [1.0, 2.0])


class PairwiseCostTest(SimpleTestCase):
    """
    Test cases for intra, inter and latent pairwise tables.
    """

    def test_intra_example(self):
        """Test rows are laid out as (l-1)*L + (s-1)."""
        table = intra_pairwise_cost([[0.0], [1.0], [1.0], [0.0]], [2.0])
        np.testing.assert_array_equal(table.numpy(), [[0.0, 2.0], [2.0, 0.0]])

    def test_intra_zero_feature(self):
        """Test a zero edge feature gives a zero table."""
        table = intra_pairwise_cost(np.ones((9, 2)), [0.0, 0.0])
        np.testing.assert_array_equal(table.numpy(), np.zeros((3, 3)))

    def test_intra_matches_naive(self):
        """Test L = 3 against a naive evaluation."""
        rng = np.random.default_rng(2)
        B, v = rng.normal(size=(9, 2)), rng.normal(size=2)
        table = intra_pairwise_cost(B, v).numpy()
        for l in range(3):
            for s in range(3):
                self.assertAlmostEqual(table[l, s], B[l * 3 + s] @ v, places=12)

    def test_inter_example(self):
        """Test the inter table is B's rows reshaped."""
        B = np.array([[1.0], [0.0], [0.0], [1.0]])
        table = inter_pairwise_cost(B, [1.0], 2, 2)
        np.testing.assert_array_equal(table.numpy(), [[1.0, 0.0], [0.0, 1.0]])

    def test_inter_matches_naive(self):
        """Test a rectangular inter table against a naive evaluation."""
        rng = np.random.default_rng(3)
        B, v = rng.normal(size=(6, 4)), rng.normal(size=4)
        table = inter_pairwise_cost(B, v, 2, 3).numpy()
        for l in range(2):
            for s in range(3):
                self.assertAlmostEqual(table[l, s], B[l * 3 + s] @ v, places=12)

    def test_latent_example(self):
        """Test same/cut/penalty cell placement."""
        table = latent_pairwise_cost([0.1, 0.2], [0.5, 0.6], 1000.0, cuttable=True)
        np.testing.assert_array_equal(table.numpy(), [[0.5, 0.1, 1000.0], [0.6, 1000.0, 0.2]])

    def test_latent_not_cuttable(self):
        """Test column 0 is all penalty for links that cannot be cut."""
        table = latent_pairwise_cost([0.1, 0.2], [0.5, 0.6], 1000.0, cuttable=False)
        np.testing.assert_array_equal(table.numpy()[:, 0], [1000.0, 1000.0])

    def test_latent_learnable_cells(self):
        """Test a 14-label table has 14 x 15 cells and 28 non-penalty ones."""
        rng = np.random.default_rng(4)
        table = latent_pairwise_cost(rng.random(14), rng.random(14), 1000.0).numpy()
        self.assertEqual(table.shape, (14, 15))
        self.assertEqual(int(np.sum(table != 1000.0)), 28)


class EdgeFeatureTest(SimpleTestCase):
    """
    Test cases for edge_feature_intra.
    """

    def test_identical_features(self):
        """Test identical features give a zero distance."""
        np.testing.assert_array_equal(edge_feature_intra([1.0, 2.0], [1.0, 2.0], [0, 1]), [0.0])

    def test_subset(self):
        """Test only the selected coordinates count."""
        np.testing.assert_array_equal(edge_feature_intra([1, 5, 2], [1, 1, 2], [1]), [4.0])

    def test_matches_norm(self):
        """Test against numpy's norm."""
        rng = np.random.default_rng(5)
        x, y = rng.normal(size=6), rng.normal(size=6)
        subset = [0, 2, 5]
        expected = np.sqrt(sum((x[i] - y[i]) ** 2 for i in subset))
        self.assertAlmostEqual(edge_feature_intra(x, y, subset)[0], expected, places=12)

    def test_bad_index(self):
        """Test an out-of-range index is rejected."""
        with self.assertRaises(IndexError):
            edge_feature_intra([1.0, 2.0], [1.0, 2.0], [4])


class ParameterShapeTest(SimpleTestCase):
    """
    Test cases for parameter bundle shapes.
    """

    def test_data61_latent_shapes(self):
        """Test the 14/13-class 2D-3D latent model shapes."""
        shapes = nominal_shapes(init_parameters(data61_like(), penalty=1000.0))
        self.assertEqual(shapes['unary[2d]'], (14, 23))
        self.assertEqual(shapes['unary[3d]'], (13, 17))
        self.assertEqual(shapes['latent_unary[2d~3d]'], (15, 41))
        self.assertEqual(shapes['intra[2d]'], (196, 1))
        self.assertEqual(shapes['intra[3d]'], (169, 1))
        self.assertEqual(shapes['latent_pairwise[2d~3d:a]'], (210, 1))
        self.assertEqual(shapes['latent_pairwise[2d~3d:b]'], (195, 1))

    def test_data61_no_latent_shapes(self):
        """Test the direct 2D-3D matrix under each feature policy."""
        modalities = data61_like()
        selected = {'2d': (20, 21, 22), '3d': (13, 14, 15, 16)}
        for policy, columns in ((EdgeFeaturePolicy(), 1),
                                (EdgeFeaturePolicy('selected', selected), 8),
                                (EdgeFeaturePolicy('full'), 41)):
            bundle = init_parameters(modalities, mode=NO_LATENT, penalty=1000.0, policy=policy)
            self.assertEqual(nominal_shapes(bundle)['inter[2d~3d]'], (182, columns))

    def test_cmu_shapes(self):
        """Test the 19-class model shapes."""
        shapes = nominal_shapes(init_parameters(cmu_like(), penalty=1000.0))
        self.assertEqual(shapes['latent_unary[2d~3d]'], (20, 52))
        self.assertEqual(shapes['latent_pairwise[2d~3d:a]'], (380, 1))
        self.assertEqual(shapes['intra[2d]'], (361, 1))
        selected = {'2d': (25, 26, 27), '3d': (19, 20, 21, 22)}
        bundle = init_parameters(cmu_like(), mode=NO_LATENT, penalty=1000.0,
                                 policy=EdgeFeaturePolicy('selected', selected))
        self.assertEqual(nominal_shapes(bundle)['inter[2d~3d]'], (361, 8))

    def test_learnable_count(self):
        """Test the learnable entry count excludes penalty cells."""
        bundle = init_parameters(data61_like(), penalty=1000.0)
        expected = 14 * 23 + 13 * 17 + 15 * 41 + 14 ** 2 + 13 ** 2 + 2 * 14 + 2 * 13
        self.assertEqual(learnable_count(bundle), expected)

    def test_zero_init_is_seed_independent(self):
        """Test zero initialization ignores the seed."""
        first = to_vector(init_parameters(data61_like(), seed=1, penalty=1000.0))
        second = to_vector(init_parameters(data61_like(), seed=2, penalty=1000.0))
        np.testing.assert_array_equal(first, second)
        self.assertFalse(first.any())

    def test_vector_round_trip(self):
        """Test from_vector inverts to_vector."""
        graph = mixed_graph()
        bundle = random_bundle(graph)
        np.testing.assert_array_equal(to_vector(from_vector(bundle, to_vector(bundle))),
                                      to_vector(bundle))


class GroundTest(SimpleTestCase):
    """
    Test cases for ground.
    """

    def setUp(self):
        self.graph = augment_with_latent(mixed_graph())

    def test_zero_params(self):
        """Test zero parameters leave only penalty cells non-zero."""
        tables = ground(self.graph, init_parameters(schema(self.graph), penalty=1000.0))
        for cost in tables.unary:
            self.assertFalse(cost.any())
        for matrix, mask in zip(tables.pairwise, tables.penalty_masks):
            values = matrix.numpy()
            if mask is None:
                self.assertFalse(values.any())
            else:
                self.assertTrue(np.all(values[mask] == 1000.0))
                self.assertFalse(values[~mask].any())

    def test_single_node(self):
        """Test a one-node graph grounds to one vector and no matrices."""
        spec = ModalitySpec('2d', LabelSpace(('a', 'b')), feature_dim=1)
        graph = build_graph([spec], [GraphNode(0, '2d', np.array([1.0]))])
        tables = ground(graph, init_parameters([spec], mode=NO_LATENT, penalty=1000.0))
        self.assertEqual(len(tables.unary), 1)
        self.assertEqual(tables.pairwise, [])

    def test_non_cuttable_column(self):
        """Test the cut column of a non-cuttable link is the penalty."""
        tables = ground(self.graph, random_bundle(self.graph))
        for edge, matrix in zip(tables.edges, tables.pairwise):
            if edge.kind == 'latent' and not tables.cuttable[edge.t]:
                np.testing.assert_array_equal(matrix[:, 0].numpy(), 1000.0)

    def test_energy_matches_direct_evaluation(self):
        """Test summing grounded tables equals evaluating the potentials directly."""
        bundle = random_bundle(self.graph, seed=3)
        tables = ground(self.graph, bundle)
        rng = np.random.default_rng(11)
        for _ in range(20):
            states = [int(rng.integers(size)) for size in tables.states]
            energy = sum(float(tables.unary[i][s]) for i, s in enumerate(states))
            energy += sum(float(m[states[e.s], states[e.t]])
                          for e, m in zip(tables.edges, tables.pairwise))
            labels = {vid: s + off for vid, s, off in
                      zip(tables.variable_ids, states, tables.offsets)}
            self.assertAlmostEqual(energy, energy_terms(self.graph, bundle, labels), places=9)

    def test_no_latent_energy(self):
        """Test direct correspondence tables under the full feature policy."""
        graph = mixed_graph()
        bundle = random_bundle(graph, mode=NO_LATENT, seed=4, policy=EdgeFeaturePolicy('full'))
        tables = ground(graph, bundle)
        self.assertEqual([e.kind for e in tables.edges].count('inter'), 3)
        labels = {0: 1, 1: 3, 2: 2, 3: 2, 4: 1}
        states = [labels[vid] - 1 for vid in tables.variable_ids]
        energy = sum(float(tables.unary[i][s]) for i, s in enumerate(states))
        energy += sum(float(m[states[e.s], states[e.t]])
                      for e, m in zip(tables.edges, tables.pairwise))
        self.assertAlmostEqual(energy, energy_terms(graph, bundle, labels), places=9)

    def test_linearity(self):
        """Test grounding is linear in the learnable parameters."""
        first = random_bundle(self.graph, seed=5)
        second = random_bundle(self.graph, seed=6)
        alpha = 0.7
        combined = from_vector(first, alpha * to_vector(first) + to_vector(second))
        t1, t2 = ground(self.graph, first), ground(self.graph, second)
        tc = ground(self.graph, combined)
        for a, b, c in zip(t1.unary, t2.unary, tc.unary):
            np.testing.assert_allclose(c.numpy(), alpha * a.numpy() + b.numpy(), atol=1e-12)
        for a, b, c, mask in zip(t1.pairwise, t2.pairwise, tc.pairwise, tc.penalty_masks):
            keep = np.ones(c.shape, dtype=bool) if mask is None else ~mask
            np.testing.assert_allclose(c.numpy()[keep],
                                       (alpha * a.numpy() + b.numpy())[keep], atol=1e-12)

    def test_autograd_flows_through_tables(self):
        """Test torch parameter vectors stay differentiable after grounding."""
        bundle = init_parameters(schema(self.graph), penalty=1000.0)
        theta = torch.zeros(learnable_count(bundle), dtype=torch.float64, requires_grad=True)
        tables = ground(self.graph, from_vector(bundle, theta))
        total = sum(u.sum() for u in tables.unary)
        total.backward()
        self.assertIsNotNone(theta.grad)

    def test_unaugmented_graph_in_latent_mode(self):
        """Test latent grounding refuses a graph without latent nodes."""
        graph = mixed_graph()
        with self.assertRaises(Exception) as ctx:
            ground(graph, init_parameters(schema(graph), penalty=1000.0))
        self.assertEqual(getattr(ctx.exception, 'kind', None), 'not augmented')

    def test_bundle_modality_mismatch(self):
        """Test a bundle shaped for other modalities is rejected."""
        bundle = init_parameters(default_schema(data61_like()), penalty=1000.0)
        with self.assertRaises(ShapeError):
            ground(self.graph, bundle)


class ModelFileTest(SimpleTestCase):
    """
    Test cases for the model file codec.
    """

    def test_bit_exact_round_trip(self):
        """Test saving and loading reproduces every value bit for bit."""
        graph = mixed_graph()
        bundle = random_bundle(graph, seed=9)
        with tempfile.TemporaryDirectory() as tmp:
            path = save_model(bundle, Path(tmp) / 'model.txt')
            loaded = load_model(path)
        self.assertEqual(loaded.block_names(), bundle.block_names())
        for name in bundle.block_names():
            np.testing.assert_array_equal(loaded.blocks[name], bundle.blocks[name])
        self.assertEqual(loaded.penalty, bundle.penalty)
        self.assertEqual(dumps_model(loaded), dumps_model(bundle))

    def test_policy_and_label_map_survive(self):
        """Test the feature policy is written into the header."""
        policy = EdgeFeaturePolicy('selected', {'2d': (20, 21, 22), '3d': (13, 14, 15, 16)})
        bundle = init_parameters(data61_like(), mode=NO_LATENT, penalty=500.0, policy=policy)
        loaded = loads_model(dumps_model(bundle))
        self.assertEqual(loaded.policy.selected, policy.selected)
        self.assertEqual(loaded.mode, NO_LATENT)
        self.assertEqual(loaded.schema.modality('2d').labels.names, DATA61_NAMES)

    def test_header_records_row_order(self):
        """Test the row ordering convention is part of the file."""
        text = dumps_model(init_parameters(cmu_like(), penalty=1000.0))
        self.assertIn('row-order (l-1)*L_cols+(s-1)', text)

    def test_truncated_file(self):
        """Test a truncated matrix is reported with its line."""
        text = dumps_model(init_parameters(cmu_like(), penalty=1000.0))
        with self.assertRaises(ModelFileError):
            loads_model('\n'.join(text.splitlines()[:12]))

    def test_identifiers_with_spaces(self):
        """Test modality ids containing spaces survive a round trip."""
        labels = LabelSpace(('car', 'road'))
        bundle = init_parameters([ModalitySpec('left camera', labels, feature_dim=2),
                                  ModalitySpec('lidar scan', labels, feature_dim=3)],
                                 penalty=1000.0)
        text = dumps_model(bundle)
        self.assertIn('matrix "unary[left camera]" 2 2', text.splitlines())
        loaded = loads_model(text)
        self.assertEqual(loaded.block_names(), bundle.block_names())
        self.assertEqual(loaded.schema.pairs[0].key, 'left camera~lidar scan')
        self.assertEqual(dumps_model(loaded), text)

    def test_bad_number_reports_its_line(self):
        """Test a malformed value raises a model file error at its line."""
        lines = dumps_model(init_parameters(cmu_like(), penalty=1000.0)).splitlines()
        header = lines.index('matrix "unary[2d]" 19 28')
        lines[header + 2] = lines[header + 2].replace('0.0', 'zero', 1)
        with self.assertRaises(ModelFileError) as ctx:
            loads_model('\n'.join(lines))
        self.assertEqual(ctx.exception.line, header + 3)

    def test_shape_disagreeing_with_header(self):
        """Test a matrix that does not fit its modality is a model file error."""
        lines = dumps_model(init_parameters(cmu_like(), penalty=1000.0)).splitlines()
        modality = next(k for k, line in enumerate(lines) if line.startswith('modality "2d"'))
        lines[modality] = lines[modality].replace(' 28 1 ', ' 27 1 ', 1)
        with self.assertRaises(ModelFileError) as ctx:
            loads_model('\n'.join(lines))
        self.assertEqual(ctx.exception.line, lines.index('matrix "unary[2d]" 19 28') + 1)

    def test_malformed_header_lines(self):
        """Test broken identifier and count fields are model file errors."""
        text = dumps_model(init_parameters(cmu_like(), penalty=1000.0))
        for old, new in (('modality "2d"', 'modality "2d'), ('modality "3d" 23', 'modality "3d" x'),
                         ('matrix "intra[2d]" 361 1', 'matrix "intra[2d]" 361')):
            with self.subTest(line=new):
                with self.assertRaises(ModelFileError):
                    loads_model(text.replace(old, new, 1))
