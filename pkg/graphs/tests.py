"""
Tests for graphs app.
"""

import numpy as np
from django.test import SimpleTestCase

from .exceptions import GraphError
from .services import (
    NO_LATENT,
    PairLabels,
    augment_with_latent,
    build_graph,
    factor_edges,
    latent_label_space,
    schema,
    single_modality,
    strip_latent,
    structure,
    validate,
    with_latent_labels,
)
from .structures import (
    Correspondence,
    GraphNode,
    IntraEdge,
    LabelMap,
    LabelSpace,
    ModalitySpec,
)


def two_modality_graph(overlap=0.5):
    """Small 2D/3D graph: 3 + 2 nodes, 2 intra edges, 2 correspondences."""
    labels = LabelSpace(('car', 'road'))
    modalities = [
        ModalitySpec('2d', labels, feature_dim=2),
        ModalitySpec('3d', labels, feature_dim=3),
    ]
    nodes = [
        GraphNode(0, '2d', np.array([1.0, 0.0]), gt=1),
        GraphNode(1, '2d', np.array([0.0, 1.0]), gt=2),
        GraphNode(2, '2d', np.array([1.0, 1.0]), gt=1),
        GraphNode(3, '3d', np.array([1.0, 0.0, 0.5]), gt=1),
        GraphNode(4, '3d', np.array([0.0, 1.0, 0.5]), gt=2),
    ]
    edges = [
        IntraEdge(0, 1, np.array([1.0])),
        IntraEdge(1, 2, np.array([1.0])),
    ]
    correspondences = [
        Correspondence(0, 3, overlap),
        Correspondence(4, 1, 0.8),
    ]
    return modalities, nodes, edges, correspondences


class LabelSpaceTest(SimpleTestCase):
    """
    Test cases for LabelSpace.
    """

    def test_regular_indices_start_at_one(self):
        """Test regular labels are indexed from 1."""
        space = LabelSpace(('a', 'b', 'c'))
        self.assertEqual(space.index('a'), 1)
        self.assertEqual(space.name(3), 'c')
        self.assertEqual(space.states, 3)
        self.assertFalse(space.contains(0))

    def test_latent_space_owns_cut(self):
        """Test the latent variant includes label 0."""
        space = LabelSpace(('a', 'b')).with_cut()
        self.assertEqual(space.states, 3)
        self.assertTrue(space.contains(0))
        self.assertEqual(space.name(0), '<cut>')

    def test_duplicate_names_rejected(self):
        """Test label names must be unique."""
        with self.assertRaises(ValueError):
            LabelSpace(('a', 'a'))


class BuildGraphTest(SimpleTestCase):
    """
    Test cases for build_graph.
    """

    def test_counts(self):
        """Test a well-formed graph keeps its nodes and has no latent nodes."""
        graph = build_graph(*two_modality_graph())
        self.assertEqual(graph.node_count, 5)
        self.assertEqual(graph.latent_count, 0)
        self.assertFalse(graph.augmented)

    def test_correspondence_endpoints_follow_declaration_order(self):
        """Test endpoint a is always in the modality declared first."""
        graph = build_graph(*two_modality_graph())
        second = graph.correspondences[1]
        self.assertEqual((second.a, second.b), (1, 4))

    def test_dangling_id(self):
        """Test a correspondence to a missing node is rejected."""
        modalities, nodes, edges, correspondences = two_modality_graph()
        correspondences.append(Correspondence(0, 99, 0.5))
        with self.assertRaises(GraphError) as ctx:
            build_graph(modalities, nodes, edges, correspondences)
        self.assertEqual(ctx.exception.kind, 'dangling id')
        self.assertIn(99, ctx.exception.ids)

    def test_cross_modality_intra_edge(self):
        """Test intra edges must stay inside one modality."""
        modalities, nodes, edges, correspondences = two_modality_graph()
        edges.append(IntraEdge(0, 3, np.array([1.0])))
        with self.assertRaises(GraphError) as ctx:
            build_graph(modalities, nodes, edges, correspondences)
        self.assertEqual(ctx.exception.kind, 'cross-modality intra-edge')
        self.assertEqual(ctx.exception.ids, (0, 3))

    def test_duplicate_edge(self):
        """Test an unordered pair appears at most once."""
        modalities, nodes, edges, correspondences = two_modality_graph()
        edges.append(IntraEdge(1, 0, np.array([2.0])))
        with self.assertRaises(GraphError) as ctx:
            build_graph(modalities, nodes, edges, correspondences)
        self.assertEqual(ctx.exception.kind, 'duplicate edge')

    def test_self_loop(self):
        """Test self-loops are rejected."""
        modalities, nodes, edges, correspondences = two_modality_graph()
        edges.append(IntraEdge(2, 2, np.array([1.0])))
        with self.assertRaises(GraphError) as ctx:
            build_graph(modalities, nodes, edges, correspondences)
        self.assertEqual(ctx.exception.kind, 'self-loop')

    def test_dimension_mismatch(self):
        """Test node features must match the modality dimension."""
        modalities, nodes, edges, correspondences = two_modality_graph()
        nodes[0] = GraphNode(0, '2d', np.array([1.0, 0.0, 0.0]), gt=1)
        with self.assertRaises(GraphError) as ctx:
            build_graph(modalities, nodes, edges, correspondences)
        self.assertEqual(ctx.exception.kind, 'dimension mismatch')

    def test_same_modality_links_need_distinct_instances(self):
        """Test frame-to-frame links are legal only across instances."""
        labels = LabelSpace(('a', 'b'))
        modalities = [ModalitySpec('2d', labels, feature_dim=1)]
        nodes = [
            GraphNode(0, '2d', np.array([0.0]), instance=0),
            GraphNode(1, '2d', np.array([1.0]), instance=1),
            GraphNode(2, '2d', np.array([1.0]), instance=1),
        ]
        graph = build_graph(modalities, nodes, (), [Correspondence(0, 1, 0.4)])
        self.assertEqual(len(graph.correspondences), 1)
        with self.assertRaises(GraphError) as ctx:
            build_graph(modalities, nodes, (), [Correspondence(1, 2, 0.4)])
        self.assertEqual(ctx.exception.kind, 'same-modality correspondence')


class AugmentTest(SimpleTestCase):
    """
    Test cases for augment_with_latent.
    """

    def setUp(self):
        self.graph = build_graph(*two_modality_graph())

    def test_one_latent_per_correspondence(self):
        """Test latent nodes replace direct links."""
        augmented = augment_with_latent(self.graph)
        self.assertEqual(augmented.latent_count, 2)
        kinds = [edge.kind for edge in factor_edges(augmented)]
        self.assertEqual(kinds.count('latent'), 4)
        self.assertEqual(kinds.count('inter'), 0)

    def test_latent_degree_is_two(self):
        """Test every latent node has exactly two incident factor edges."""
        augmented = augment_with_latent(self.graph)
        net = structure(augmented)
        for t in range(augmented.latent_count):
            self.assertEqual(net.degree[augmented.node_count + t], 2)

    def test_no_factor_joins_modalities_directly(self):
        """Test no factor connects two regular nodes of different modalities."""
        augmented = augment_with_latent(self.graph)
        for edge in factor_edges(augmented):
            if edge.kind == 'intra':
                a = augmented.nodes[edge.s].modality
                b = augmented.nodes[edge.t].modality
                self.assertEqual(a, b)

    def test_latent_feature_layout(self):
        """Test latent features are concat(x_a, x_b, overlap)."""
        augmented = augment_with_latent(self.graph)
        latent = augmented.latent_nodes[0]
        np.testing.assert_array_equal(latent.feature, [1.0, 0.0, 1.0, 0.0, 0.5, 0.5])
        self.assertEqual(latent.latent_id, 5)
        self.assertEqual(augmented.latent_nodes[1].latent_id, 6)

    def test_latent_feature_length_matches_table_columns(self):
        """Test 23 + 17 + 1 = 41 latent feature columns."""
        labels = LabelSpace(('a', 'b'))
        modalities = [
            ModalitySpec('2d', labels, feature_dim=23),
            ModalitySpec('3d', labels, feature_dim=17),
        ]
        nodes = [
            GraphNode(0, '2d', np.zeros(23)),
            GraphNode(1, '3d', np.zeros(17)),
        ]
        graph = augment_with_latent(build_graph(modalities, nodes, (), [Correspondence(0, 1, 0.3)]))
        self.assertEqual(graph.latent_nodes[0].feature.shape, (41,))

    def test_empty_correspondences(self):
        """Test T = 0 only flags the graph."""
        modalities, nodes, edges, _ = two_modality_graph()
        augmented = augment_with_latent(build_graph(modalities, nodes, edges, ()))
        self.assertTrue(augmented.augmented)
        self.assertEqual(augmented.latent_count, 0)

    def test_already_augmented(self):
        """Test augmenting twice is an error."""
        augmented = augment_with_latent(self.graph)
        with self.assertRaises(GraphError) as ctx:
            augment_with_latent(augmented)
        self.assertEqual(ctx.exception.kind, 'already augmented')

    def test_deterministic(self):
        """Test augmenting fresh copies gives the same structure."""
        first = augment_with_latent(build_graph(*two_modality_graph()))
        second = augment_with_latent(build_graph(*two_modality_graph()))
        self.assertEqual(factor_edges(first), factor_edges(second))
        self.assertEqual([l.latent_id for l in first.latent_nodes],
                         [l.latent_id for l in second.latent_nodes])

    def test_original_untouched(self):
        """Test augmentation returns a copy."""
        augment_with_latent(self.graph)
        self.assertFalse(self.graph.augmented)
        self.assertEqual(strip_latent(augment_with_latent(self.graph)).latent_count, 0)


class ValidateTest(SimpleTestCase):
    """
    Test cases for validate.
    """

    def test_well_formed(self):
        """Test a valid graph yields no diagnostics."""
        graph = augment_with_latent(build_graph(*two_modality_graph()))
        self.assertEqual(validate(graph), [])

    def test_overlap_out_of_range(self):
        """Test overlap outside [0, 1] is reported."""
        graph = build_graph(*two_modality_graph())
        bad = graph.replace(correspondences=(Correspondence(0, 3, 1.3),) + graph.correspondences[1:])
        kinds = [d.kind for d in validate(bad)]
        self.assertEqual(kinds, ['overlap out of range'])

    def test_non_cuttable_link_labeled_cut(self):
        """Test a non-cuttable latent node cannot carry the cut label."""
        modalities, nodes, edges, _ = two_modality_graph()
        graph = augment_with_latent(build_graph(
            modalities, nodes, edges, [Correspondence(0, 3, 1.0, cuttable=False)]
        ))
        graph = with_latent_labels(graph, [0])
        kinds = [d.kind for d in validate(graph)]
        self.assertIn('non-cuttable link labeled cut', kinds)


class LabelSpaceUnionTest(SimpleTestCase):
    """
    Test cases for latent label spaces and compatibility.
    """

    def test_union_of_sides(self):
        """Test an unmapped pair uses the ordered union of both spaces."""
        names_2d = tuple(f"c{i}" for i in range(13)) + ('sky',)
        modalities = [
            ModalitySpec('2d', LabelSpace(names_2d), feature_dim=1),
            ModalitySpec('3d', LabelSpace(names_2d[:13]), feature_dim=1),
        ]
        graph = build_graph(modalities, [GraphNode(0, '2d', np.zeros(1))])
        space = latent_label_space(graph, '2d', '3d')
        self.assertEqual(space.states, 15)

    def test_mapped_pair_uses_source_space(self):
        """Test a semantic to geometric pair takes the semantic labels."""
        semantic = ModalitySpec('sem', LabelSpace(('grass', 'road', 'tree')), feature_dim=1)
        geometric = ModalitySpec('geo', LabelSpace(('horizontal', 'vertical')), feature_dim=1)
        label_map = LabelMap('sem', 'geo', {'grass': 'horizontal', 'road': 'horizontal',
                                            'tree': 'vertical'})
        labels = PairLabels(semantic, geometric, label_map)
        self.assertEqual(labels.latent.names, ('grass', 'road', 'tree'))
        self.assertEqual(labels.compatible('a', 2), [2])
        self.assertEqual(labels.compatible('b', 1), [1, 2])
        self.assertEqual(labels.agree(2, 1), 2)
        self.assertIsNone(labels.agree(3, 1))

    def test_schema_lists_linked_pairs(self):
        """Test the schema holds one pair per linked modality pair."""
        graph = build_graph(*two_modality_graph())
        pairs = schema(graph).pairs
        self.assertEqual([p.key for p in pairs], ['2d~3d'])


class RestrictionTest(SimpleTestCase):
    """
    Test cases for single_modality and no-latent factor edges.
    """

    def test_single_modality(self):
        """Test restriction keeps one modality's nodes and edges."""
        graph = single_modality(build_graph(*two_modality_graph()), '2d')
        self.assertEqual(graph.node_count, 3)
        self.assertEqual(len(graph.intra_edges), 2)
        self.assertEqual(graph.correspondences, ())

    def test_no_latent_edges(self):
        """Test no-latent mode links correspondences directly."""
        graph = build_graph(*two_modality_graph())
        kinds = [edge.kind for edge in factor_edges(graph, NO_LATENT)]
        self.assertEqual(kinds, ['intra', 'intra', 'inter', 'inter'])
