"""
Tests for inference app.
"""

import json
import math
import tempfile
from pathlib import Path

import networkx as nx
import numpy as np
import torch
from django.test import SimpleTestCase

from graphs.services import NO_LATENT, augment_with_latent, build_graph, schema, single_modality
from graphs.structures import Correspondence, GraphNode, IntraEdge, LabelSpace, ModalitySpec
from learning.services import build_sample
from potentials.exceptions import ShapeError
from potentials.serializers import save_model
from potentials.services import ground, init_parameters
from potentials.structures import ParameterBundle, PotentialTables, latent_unary_key, unary_key
from scenes.serializers import export_scene

from .exceptions import LabelingError, NumericalError, StateSpaceError
from .oracles import brute_force_energy, brute_force_marginals
from .serializers import dumps_labeling, load_labeling, loads_labeling
from .services import cut_decisions, edge_appearance, map_decode, trw_marginals
from .structures import CutDecision, Labeling, TrwConfig, marginals_from_arrays
from .tasks import infer_scene, label_sample


def random_tree_tables(rng, max_nodes=8, max_labels=4, scale=1.0):
    """Random tree-structured tables with mixed state counts."""
    n = int(rng.integers(2, max_nodes + 1))
    tree = nx.Graph()
    tree.add_nodes_from(range(n))
    tree.add_edges_from((int(rng.integers(i)), i) for i in range(1, n))
    states = [int(rng.integers(1, max_labels + 1)) for _ in range(n)]
    unary = [rng.normal(scale=scale, size=k) for k in states]
    pairwise = [(s, t, rng.normal(scale=scale, size=(states[s], states[t])))
                for s, t in sorted(tree.edges())]
    return PotentialTables.from_arrays(unary, pairwise), tree


class TrwConfigTest(SimpleTestCase):
    """
    Test cases for TrwConfig validation.
    """

    def test_invalid_values(self):
        """Test K, damping and rho ranges are enforced."""
        with self.assertRaises(ValueError):
            TrwConfig(iterations=0)
        with self.assertRaises(ValueError):
            TrwConfig(damping=1.0)
        with self.assertRaises(ValueError):
            TrwConfig(edge_appearance=(0.5, 0.0))
        with self.assertRaises(ValueError):
            TrwConfig(edge_appearance='mean-field')

    def test_from_settings_overrides(self):
        """Test explicit values win over settings defaults."""
        config = TrwConfig.from_settings(iterations=3, damping=None)
        self.assertEqual(config.iterations, 3)
        self.assertEqual(config.damping, 0.0)


class TrwMarginalsTest(SimpleTestCase):
    """
    Test cases for trw_marginals.
    """

    def test_single_node(self):
        """Test costs [0, ln 3] give [0.75, 0.25]."""
        tables = PotentialTables.from_arrays([[0.0, math.log(3.0)]])
        marginals = trw_marginals(tables, TrwConfig(iterations=1))
        np.testing.assert_allclose(marginals.node(0), [0.75, 0.25], atol=1e-12)
        self.assertAlmostEqual(marginals.log_z, math.log(4.0 / 3.0), places=12)

    def test_zero_tables_are_uniform(self):
        """Test all-zero tables on a loopy graph give uniform beliefs."""
        pairwise = [(0, 1, np.zeros((3, 2))), (1, 2, np.zeros((2, 3))), (2, 0, np.zeros((3, 3)))]
        tables = PotentialTables.from_arrays([np.zeros(3), np.zeros(2), np.zeros(3)], pairwise)
        marginals = trw_marginals(tables, TrwConfig(iterations=5))
        np.testing.assert_allclose(marginals.node(0), np.full(3, 1 / 3), atol=1e-12)
        np.testing.assert_allclose(marginals.node(1), np.full(2, 1 / 2), atol=1e-12)
        np.testing.assert_allclose(marginals.edge(0), np.full((3, 2), 1 / 6), atol=1e-12)

    def test_tree_exactness(self):
        """Test rho = 1 and K = diameter reproduce exact marginals on trees."""
        rng = np.random.default_rng(2024)
        for _ in range(200):
            tables, tree = random_tree_tables(rng)
            config = TrwConfig(iterations=max(1, nx.diameter(tree)), edge_appearance='loopy')
            approx = trw_marginals(tables, config)
            exact = brute_force_marginals(tables)
            for i in range(tables.variable_count):
                np.testing.assert_allclose(approx.node(i), exact.node(i), atol=1e-6)
            for e in range(len(tables.edges)):
                np.testing.assert_allclose(approx.edge(e), exact.edge(e), atol=1e-6)
            self.assertAlmostEqual(approx.log_z, exact.log_z, places=6)

    def test_uniform_rho_is_one_on_trees(self):
        """Test the spanning-tree policy reduces to rho = 1 on a tree."""
        tables, _ = random_tree_tables(np.random.default_rng(3))
        np.testing.assert_array_equal(edge_appearance(tables), np.ones(len(tables.edges)))

    def test_uniform_rho_on_cycle(self):
        """Test a 4-cycle gets rho = 3/4."""
        pairwise = [(i, (i + 1) % 4, np.zeros((2, 2))) for i in range(4)]
        tables = PotentialTables.from_arrays([np.zeros(2)] * 4, pairwise)
        np.testing.assert_allclose(edge_appearance(tables), np.full(4, 0.75))

    def test_normalization_regardless_of_k(self):
        """Test beliefs sum to one for any truncation depth on a loopy graph."""
        rng = np.random.default_rng(5)
        pairwise = [(0, 1, rng.normal(size=(3, 3))), (1, 2, rng.normal(size=(3, 3))),
                    (2, 3, rng.normal(size=(3, 3))), (3, 0, rng.normal(size=(3, 3))),
                    (0, 2, rng.normal(size=(3, 3)))]
        tables = PotentialTables.from_arrays([rng.normal(size=3) for _ in range(4)], pairwise)
        for k in (1, 2, 7):
            marginals = trw_marginals(tables, TrwConfig(iterations=k, damping=0.3))
            for node in marginals.nodes():
                self.assertAlmostEqual(node.sum(), 1.0, delta=1e-9)
            for edge in marginals.edge_list():
                self.assertAlmostEqual(edge.sum(), 1.0, delta=1e-9)

    def test_label_symmetry(self):
        """Test permuting labels in every table permutes the beliefs."""
        rng = np.random.default_rng(8)
        unary = [rng.normal(size=3) for _ in range(3)]
        pairs = [(0, 1, rng.normal(size=(3, 3))), (1, 2, rng.normal(size=(3, 3))),
                 (0, 2, rng.normal(size=(3, 3)))]
        perm = [2, 0, 1]
        permuted = PotentialTables.from_arrays(
            [u[perm] for u in unary], [(s, t, p[np.ix_(perm, perm)]) for s, t, p in pairs]
        )
        config = TrwConfig(iterations=6)
        base = trw_marginals(PotentialTables.from_arrays(unary, pairs), config)
        moved = trw_marginals(permuted, config)
        for i in range(3):
            np.testing.assert_allclose(moved.node(i), base.node(i)[perm], atol=1e-12)

    def test_deterministic(self):
        """Test two runs give bitwise identical beliefs."""
        tables, _ = random_tree_tables(np.random.default_rng(13))
        first = trw_marginals(tables, TrwConfig(iterations=4))
        second = trw_marginals(tables, TrwConfig(iterations=4))
        self.assertTrue(torch.equal(first.node_log, second.node_log))
        self.assertTrue(torch.equal(first.edge_log, second.edge_log))

    def test_tolerance_stops_early(self):
        """Test a positive tolerance ends message passing once messages settle."""
        tables, _ = random_tree_tables(np.random.default_rng(21), max_nodes=4)
        marginals = trw_marginals(tables, TrwConfig(iterations=50, tolerance=1e-9))
        self.assertLess(marginals.iterations_run, 50)

    def test_non_finite_table(self):
        """Test a non-finite cost is reported with its clique."""
        tables = PotentialTables.from_arrays([[0.0, 1.0], [0.0, 1.0]],
                                             [(0, 1, [[0.0, np.nan], [0.0, 0.0]])])
        with self.assertRaises(NumericalError) as ctx:
            trw_marginals(tables, TrwConfig(iterations=2))
        self.assertEqual(ctx.exception.clique, 'clique 0')

    def test_penalty_cells_are_avoided(self):
        """Test zero parameters never decode a latent node onto a penalty-only cell."""
        labels = LabelSpace(('a', 'b', 'c'))
        modalities = [ModalitySpec('2d', labels, feature_dim=1),
                      ModalitySpec('3d', labels, feature_dim=1)]
        nodes = [GraphNode(i, '2d' if i < 3 else '3d', np.array([1.0])) for i in range(6)]
        edges = [IntraEdge(0, 1, np.array([1.0])), IntraEdge(3, 4, np.array([1.0]))]
        links = [Correspondence(0, 3, 0.5), Correspondence(1, 4, 0.5),
                 Correspondence(2, 5, 0.5, cuttable=False)]
        graph = augment_with_latent(build_graph(modalities, nodes, edges, links))
        tables = ground(graph, init_parameters(schema(graph), penalty=1000.0))
        decoded = map_decode(trw_marginals(tables, TrwConfig(iterations=10)))
        for edge, mask in zip(tables.edges, tables.penalty_masks):
            if edge.kind != 'latent':
                continue
            state_t = decoded[edge.t] - tables.offsets[edge.t]
            self.assertFalse(mask[:, state_t].all())
        self.assertNotEqual(decoded[graph.node_count + 2], 0)


class DecodeTest(SimpleTestCase):
    """
    Test cases for map_decode and cut reporting.
    """

    def _marginals(self, vectors, offsets):
        return marginals_from_arrays([np.asarray(v) for v in vectors], [], [], 0.0,
                                     offsets=offsets)

    def test_argmax(self):
        """Test the most probable label wins."""
        self.assertEqual(map_decode(self._marginals([[0.1, 0.7, 0.2]], [1])), [2])

    def test_tie_goes_to_lowest_label(self):
        """Test exact ties decode to the lowest label."""
        self.assertEqual(map_decode(self._marginals([[0.5, 0.5]], [1])), [1])

    def test_latent_cut(self):
        """Test a latent node peaked at state 0 reports a cut."""
        marginals = self._marginals([[0.5, 0.5], [0.8, 0.1, 0.1]], [1, 0])
        marginals.correspondence_of = {1: 0}
        labels = map_decode(marginals)
        self.assertEqual(labels, [1, 0])
        self.assertEqual(cut_decisions(marginals, labels),
                         [{'correspondence': 0, 'decision': 'cut', 'label': 0}])


class BruteForceTest(SimpleTestCase):
    """
    Test cases for the enumeration oracles.
    """

    def test_two_free_nodes(self):
        """Test zero costs on two binary nodes."""
        tables = PotentialTables.from_arrays([np.zeros(2), np.zeros(2)],
                                             [(0, 1, np.zeros((2, 2)))])
        exact = brute_force_marginals(tables)
        np.testing.assert_allclose(exact.edge(0), np.full((2, 2), 0.25))
        np.testing.assert_allclose(exact.node(0), [0.5, 0.5])
        self.assertAlmostEqual(exact.log_z, math.log(4.0), places=12)

    def test_single_node_closed_form(self):
        """Test costs [0, ln 3] give log Z = ln(4/3)."""
        exact = brute_force_marginals(PotentialTables.from_arrays([[0.0, math.log(3.0)]]))
        np.testing.assert_allclose(exact.node(0), [0.75, 0.25])
        self.assertAlmostEqual(exact.log_z, math.log(4.0 / 3.0), places=12)

    def test_loop_self_consistency(self):
        """Test edge marginals sum to node marginals on a 4-cycle."""
        rng = np.random.default_rng(17)
        pairwise = [(i, (i + 1) % 4, rng.normal(size=(3, 3))) for i in range(4)]
        tables = PotentialTables.from_arrays([rng.normal(size=3) for _ in range(4)], pairwise)
        exact = brute_force_marginals(tables)
        for e, edge in enumerate(tables.edges):
            joint = exact.edge(e)
            np.testing.assert_allclose(joint.sum(axis=1), exact.node(edge.s), atol=1e-14)
            np.testing.assert_allclose(joint.sum(axis=0), exact.node(edge.t), atol=1e-14)

    def test_state_space_limit(self):
        """Test enumeration refuses large state spaces."""
        tables = PotentialTables.from_arrays([np.zeros(10)] * 4)
        with self.assertRaises(StateSpaceError):
            brute_force_marginals(tables, limit=1000)

    def test_energy_zero_tables(self):
        """Test zero tables give zero energy."""
        tables = PotentialTables.from_arrays([np.zeros(2), np.zeros(3)],
                                             [(0, 1, np.zeros((2, 3)))])
        self.assertEqual(brute_force_energy(tables, [2, 3]), 0.0)

    def test_energy_penalty_cell(self):
        """Test selecting a penalty cell costs at least P."""
        tables = PotentialTables.from_arrays([np.zeros(2), np.zeros(3)],
                                             [(0, 1, [[0.0, 0.1, 1000.0], [0.0, 1000.0, 0.2]])],
                                             offsets=[1, 0])
        self.assertGreaterEqual(brute_force_energy(tables, [1, 2]), 1000.0)

    def test_probability_reconstruction(self):
        """Test exp(-energy) / Z equals the enumerated probability."""
        rng = np.random.default_rng(19)
        tables = PotentialTables.from_arrays(
            [rng.normal(size=2), rng.normal(size=3), rng.normal(size=2)],
            [(0, 1, rng.normal(size=(2, 3))), (2, 1, rng.normal(size=(2, 3)))],
        )
        exact = brute_force_marginals(tables)
        total = 0.0
        for a in range(2):
            for b in range(3):
                for c in range(2):
                    total += math.exp(-brute_force_energy(tables, [a + 1, b + 1, c + 1])
                                      - exact.log_z)
        self.assertAlmostEqual(total, 1.0, delta=1e-12)
        joint = exact.edge(0)
        expected = sum(math.exp(-brute_force_energy(tables, [1, 2, c + 1]) - exact.log_z)
                       for c in range(2))
        self.assertAlmostEqual(joint[0, 1], expected, delta=1e-12)

    def test_incomplete_labeling(self):
        """Test a short labeling is rejected."""
        tables = PotentialTables.from_arrays([np.zeros(2), np.zeros(2)])
        with self.assertRaises(LabelingError):
            brute_force_energy(tables, [1])


def linked_sample(cuttable=True):
    """Two one-hot modalities of three nodes, linked node by node."""
    labels = LabelSpace(('car', 'road'))
    modalities = [ModalitySpec('2d', labels, feature_dim=2), ModalitySpec('3d', labels, feature_dim=2)]
    truth = [1, 2, 1]
    nodes = [GraphNode(i, '2d', np.eye(2)[y - 1], gt=y) for i, y in enumerate(truth)]
    nodes += [GraphNode(3 + i, '3d', np.eye(2)[y - 1], gt=y) for i, y in enumerate(truth)]
    edges = [IntraEdge(0, 1, np.ones(1)), IntraEdge(3, 4, np.ones(1))]
    links = [Correspondence(i, 3 + i, 0.5, cuttable=cuttable) for i in range(3)]
    return build_sample(build_graph(modalities, nodes, edges, links), sample_id='scene-0007')


def revealing_bundle(sample, mode='latent', strength=5.0):
    """Bundle whose unary costs pick the label a one-hot feature points at."""
    params = init_parameters(schema(sample.graph), mode=mode)
    blocks = dict(params.blocks)
    for spec in sample.graph.modalities:
        blocks[unary_key(spec.modality_id)] = -strength * np.eye(2)
    return ParameterBundle(schema=params.schema, mode=mode, blocks=blocks,
                           penalty=params.penalty, policy=params.policy)


class LabelSampleTest(SimpleTestCase):
    """
    Test cases for decoding a whole sample.
    """

    def setUp(self):
        self.sample = linked_sample()

    def test_zero_model_picks_first_label(self):
        """Test uniform beliefs decode every node to label 1."""
        params = init_parameters(schema(self.sample.graph), mode=NO_LATENT)
        labeling = label_sample(self.sample, params, 'no-latent', TrwConfig(iterations=5))
        self.assertEqual(sorted(labeling.nodes), list(range(6)))
        self.assertTrue(all(label == 1 for _, label in labeling.nodes.values()))
        self.assertEqual(labeling.decisions, [])

    def test_revealing_model_recovers_truth(self):
        """Test strong unary evidence yields the ground truth on every node."""
        labeling = label_sample(self.sample, revealing_bundle(self.sample), 'latent')
        truth = self.sample.ground_truth()
        for node_id, (_, label) in labeling.nodes.items():
            self.assertEqual(label, truth[node_id])
        self.assertEqual([d.correspondence for d in labeling.decisions], [0, 1, 2])
        self.assertEqual(labeling.sample_id, 'scene-0007')

    def test_non_cuttable_links_never_cut(self):
        """Test latent nodes of non-cuttable links decode to a regular label."""
        sample = linked_sample(cuttable=False)
        params = init_parameters(schema(sample.graph))
        with self.assertNoLogs('inference.tasks', level='WARNING'):
            labeling = label_sample(sample, params, 'latent', TrwConfig(iterations=5))
        self.assertEqual(len(labeling.decisions), 3)
        for decision in labeling.decisions:
            self.assertFalse(decision.cuttable)
            self.assertNotEqual(decision.label, 0)
            self.assertEqual(decision.decision, 'label')

    def test_dominated_penalty_is_reported(self):
        """Test a cut belief on a non-cuttable link is overridden with a warning."""
        sample = linked_sample(cuttable=False)
        params = init_parameters(schema(sample.graph), penalty=1.0)
        blocks = dict(params.blocks)
        key = latent_unary_key(params.schema.pairs[0])
        blocks[key] = np.zeros_like(blocks[key])
        blocks[key][0, -1] = -100.0
        params = ParameterBundle(schema=params.schema, mode=params.mode, blocks=blocks,
                                 penalty=params.penalty, policy=params.policy)
        with self.assertLogs('inference.tasks', level='WARNING') as logs:
            labeling = label_sample(sample, params, 'latent', TrwConfig(iterations=5))
        self.assertIn('cannot be cut', logs.output[0])
        self.assertIn('[6, 7, 8]', logs.output[0])
        self.assertTrue(all(d.label != 0 for d in labeling.decisions))

    def test_single_modality_bundle(self):
        """Test a one-modality bundle labels only its own nodes."""
        graph = single_modality(self.sample.graph, '3d')
        params = init_parameters(schema(graph), mode=NO_LATENT)
        labeling = label_sample(self.sample, params, 'single-domain')
        self.assertEqual(sorted(labeling.nodes), [3, 4, 5])
        self.assertEqual(set(labeling.labels_of('3d')), {3, 4, 5})
        self.assertEqual(labeling.labels_of('2d'), {})


class LabelingFileTest(SimpleTestCase):
    """
    Test cases for the labeling file codec.
    """

    def setUp(self):
        self.labeling = Labeling(
            sample_id='scene-0001', preset='latent',
            nodes={0: ('2d', 2), 3: ('3d', 1)},
            decisions=[CutDecision(0, 0, 3, 0), CutDecision(1, 1, 4, 2, cuttable=False)],
        )

    def test_round_trip(self):
        """Test a labeling reads back unchanged."""
        text = dumps_labeling(self.labeling)
        loaded = loads_labeling(text)
        self.assertEqual(loaded.nodes, self.labeling.nodes)
        self.assertEqual(loaded.decisions, self.labeling.decisions)
        self.assertEqual(dumps_labeling(loaded), text)

    def test_decision_lines(self):
        """Test cut decisions are written with their correspondence id."""
        lines = [json.loads(line) for line in dumps_labeling(self.labeling).splitlines()]
        self.assertEqual(lines[0]['format'], 'softcorr-labeling')
        decisions = [line for line in lines if line.get('section') == 'decisions']
        self.assertEqual([(d['correspondence'], d['decision']) for d in decisions],
                         [(0, 'cut'), (1, 'label')])
        self.assertEqual(self.labeling.cut_correspondences(), [0])

    def test_bad_files(self):
        """Test malformed files are rejected with their line number."""
        with self.assertRaisesRegex(LabelingError, 'line 1'):
            loads_labeling('{"format": "softcorr-scene", "version": 1}\n')
        header = dumps_labeling(Labeling('s', 'latent')).splitlines()[0]
        with self.assertRaisesRegex(LabelingError, 'line 2'):
            loads_labeling(header + '\n{"section": "nodes", "id": 1}\n')
        with self.assertRaisesRegex(LabelingError, 'line 2'):
            loads_labeling(header + '\nnot json\n')


class InferSceneTaskTest(SimpleTestCase):
    """
    Test cases for the scene labeling task.
    """

    def test_writes_labeling_file(self):
        """Test the task labels a scene file and reports its counts."""
        sample = linked_sample()
        with tempfile.TemporaryDirectory() as tmp:
            scene_path = export_scene(sample, Path(tmp) / 'scene.jsonl')
            model_path = save_model(revealing_bundle(sample), Path(tmp) / 'model.txt')
            out_path = Path(tmp) / 'labels' / 'scene.jsonl'
            result = infer_scene.delay(str(scene_path), str(model_path), str(out_path),
                                       preset='latent', iterations=5).get()
            labeling = load_labeling(out_path)
        self.assertEqual(result['nodes'], 6)
        self.assertEqual(len(labeling.nodes), 6)
        self.assertEqual(len(labeling.decisions), 3)
        self.assertEqual(result['cuts'], len(labeling.cut_correspondences()))

    def test_shape_mismatch(self):
        """Test a model shaped for other modalities is refused."""
        sample = linked_sample()
        other = (ModalitySpec('2d', LabelSpace(('a', 'b', 'c')), feature_dim=2),
                 ModalitySpec('3d', LabelSpace(('a', 'b', 'c')), feature_dim=2))
        with tempfile.TemporaryDirectory() as tmp:
            scene_path = export_scene(sample, Path(tmp) / 'scene.jsonl')
            model_path = save_model(init_parameters(other), Path(tmp) / 'model.txt')
            with self.assertRaises(ShapeError):
                infer_scene(str(scene_path), str(model_path), str(Path(tmp) / 'out.jsonl'))
