"""
Tests for scenes app.
"""

import json
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from graphs.services import NO_LATENT, schema
from graphs.structures import CUT_LABEL, GraphNode, LabelMap, LabelSpace, ModalitySpec
from learning.exceptions import GroundTruthError
from learning.services import build_sample, train
from potentials.services import edge_feature_intra, init_parameters

from .exceptions import SceneConfigError, SchemaError
from .serializers import dumps_scene, export_scene, loads_scene, scene_to_dict
from .services import (
    class_prototypes,
    generate_scene,
    geometric_features,
    ingest_features,
    inject_misalignment,
)
from .structures import CORRUPT_FEATURES, SceneConfig, default_modalities

DATA61_2D = ('grass', 'road', 'sidewalk', 'building', 'vehicle', 'tree trunk', 'pole', 'sign',
             'post', 'barrier', 'tree leaves', 'bush', 'sky', 'wire')


def small_config(**overrides):
    values = dict(modalities=default_modalities(label_count=3, dim=4), nodes_per_modality=12,
                  intra_density=0.2, correspondence_count=8, misalignment_rate=0.3,
                  class_separation=6.0, noise=0.5, seed=1)
    values.update(overrides)
    return SceneConfig(**values)


def latent_labels(sample):
    return [latent.gt for latent in sample.graph.latent_nodes]


def cut_fraction(sample):
    labels = latent_labels(sample)
    return sum(1 for label in labels if label == CUT_LABEL) / len(labels)


def nearest_prototype(feature, prototypes):
    return int(np.argmin(np.linalg.norm(prototypes - feature[:prototypes.shape[1]], axis=1))) + 1


class SceneConfigTest(SimpleTestCase):
    """
    Test cases for SceneConfig validation and parsing.
    """

    def test_rates_in_range(self):
        """Test rates outside [0, 1] are rejected."""
        with self.assertRaises(SceneConfigError):
            small_config(misalignment_rate=1.5)
        with self.assertRaises(SceneConfigError):
            small_config(intra_density=-0.1)
        with self.assertRaises(SceneConfigError):
            small_config(class_separation=0.0)

    def test_infeasible_correspondence_count(self):
        """Test more links than nodes is infeasible."""
        with self.assertRaises(SceneConfigError):
            small_config(correspondence_count=13)

    def test_edge_dim_must_be_one(self):
        """Test generated modalities carry a single intra-edge feature."""
        labels = LabelSpace(('a', 'b'))
        with self.assertRaises(SceneConfigError):
            SceneConfig(modalities=(ModalitySpec('2d', labels, 3, edge_dim=2),))

    def test_from_dict(self):
        """Test a generator config file object is parsed."""
        config = SceneConfig.from_dict({
            'modalities': [{'id': 'rgb', 'label_count': 4, 'dim': 6},
                           {'id': 'lidar', 'labels': ['class1', 'class2'], 'dim': 3}],
            'nodes_per_modality': 10,
            'correspondence_count': 5,
            'links': [['rgb', 'lidar', 5]],
        })
        self.assertEqual(config.modality('rgb').labels.size, 4)
        self.assertEqual(config.link_counts(), (('rgb', 'lidar', 5),))

    def test_from_dict_unknown_key(self):
        """Test unknown keys are reported."""
        with self.assertRaises(SceneConfigError):
            SceneConfig.from_dict({'nodes': 3})

    def test_with_seed_keeps_prototypes(self):
        """Test reseeded configs share the prototypes of the base seed."""
        base = small_config(seed=5)
        first, second = base.with_seed(6), base.with_seed(7)
        np.testing.assert_array_equal(class_prototypes(first)['2d'], class_prototypes(second)['2d'])


class GenerateSceneTest(SimpleTestCase):
    """
    Test cases for generate_scene.
    """

    def test_no_misalignment(self):
        """Test rate 0 gives no cut links."""
        sample = generate_scene(small_config(misalignment_rate=0.0))
        self.assertEqual(len(latent_labels(sample)), 8)
        self.assertTrue(all(label != CUT_LABEL for label in latent_labels(sample)))

    def test_full_misalignment(self):
        """Test rate 1 cuts every link."""
        sample = generate_scene(small_config(misalignment_rate=1.0))
        self.assertTrue(all(label == CUT_LABEL for label in latent_labels(sample)))

    def test_inconsistent_fraction(self):
        """Test rate 0.17 over 1000 links per scene stays in the binomial band."""
        config = SceneConfig(modalities=default_modalities(label_count=3, dim=3),
                             nodes_per_modality=1000, intra_density=0.0,
                             correspondence_count=1000, misalignment_rate=0.17)
        fractions = [cut_fraction(generate_scene(config.with_seed(seed))) for seed in range(10)]
        mean = float(np.mean(fractions))
        self.assertGreaterEqual(mean, 0.14)
        self.assertLessEqual(mean, 0.20)

    def test_deterministic(self):
        """Test the same seed gives the same bytes and another seed does not."""
        config = small_config()
        self.assertEqual(dumps_scene(generate_scene(config)), dumps_scene(generate_scene(config)))
        self.assertNotEqual(dumps_scene(generate_scene(config)),
                            dumps_scene(generate_scene(config.with_seed(2))))

    def test_consistent_links_agree(self):
        """Test uncut links join equal labels and cut links different ones."""
        sample = generate_scene(small_config(misalignment_rate=0.5))
        graph = sample.graph
        for latent in graph.latent_nodes:
            corr = graph.correspondences[latent.correspondence]
            same = graph.node(corr.a).gt == graph.node(corr.b).gt
            self.assertEqual(same, latent.gt != CUT_LABEL)
            if same:
                self.assertEqual(latent.gt, graph.node(corr.a).gt)

    def test_flipped_features_follow_new_label(self):
        """Test flipped endpoints look like their new class."""
        config = small_config(nodes_per_modality=60, correspondence_count=60,
                              misalignment_rate=0.5, class_separation=10.0, noise=0.5)
        sample = generate_scene(config)
        prototypes = class_prototypes(config)
        graph = sample.graph
        hits = total = 0
        for latent in graph.latent_nodes:
            if latent.gt != CUT_LABEL:
                continue
            node = graph.node(graph.correspondences[latent.correspondence].b)
            hits += nearest_prototype(node.feature, prototypes[node.modality]) == node.gt
            total += 1
        self.assertGreater(total, 0)
        self.assertGreaterEqual(hits / total, 0.95)

    def test_corrupt_features_mode(self):
        """Test corrupted features keep labels consistent but mislead."""
        config = small_config(nodes_per_modality=40, correspondence_count=40,
                              misalignment_rate=1.0, misalignment_mode=CORRUPT_FEATURES,
                              class_separation=10.0, noise=0.5)
        sample = generate_scene(config)
        prototypes = class_prototypes(config)
        graph = sample.graph
        self.assertTrue(all(label != CUT_LABEL for label in latent_labels(sample)))
        misleading = sum(
            nearest_prototype(graph.node(c.b).feature, prototypes['3d']) != graph.node(c.b).gt
            for c in graph.correspondences
        )
        self.assertGreaterEqual(misleading, 38)

    def test_intra_edges(self):
        """Test the edge count follows the density and features are distances."""
        config = small_config(intra_density=0.25)
        sample = generate_scene(config)
        graph = sample.graph
        self.assertEqual(len(graph.intra_edges), 2 * round(0.25 * 66))
        edge = graph.intra_edges[0]
        np.testing.assert_allclose(
            edge.feature, edge_feature_intra(graph.node(edge.a).feature, graph.node(edge.b).feature)
        )

    def test_bias_feature(self):
        """Test the bias entry is appended to every node feature."""
        sample = generate_scene(small_config(bias_feature=True))
        for node in sample.graph.nodes:
            self.assertEqual(node.feature.shape, (4,))
            self.assertEqual(node.feature[-1], 1.0)

    def test_no_shared_label(self):
        """Test modalities without a common label cannot be linked."""
        modalities = (ModalitySpec('2d', LabelSpace(('a', 'b')), 2),
                      ModalitySpec('3d', LabelSpace(('c', 'd')), 2))
        with self.assertRaises(SceneConfigError):
            generate_scene(SceneConfig(modalities=modalities, nodes_per_modality=5,
                                       correspondence_count=3))

    def test_subset_label_space(self):
        """Test a modality lacking one class still gets agreeing links."""
        modalities = (ModalitySpec('2d', LabelSpace(DATA61_2D), 23),
                      ModalitySpec('3d', LabelSpace(DATA61_2D[:12] + ('wire',)), 17))
        sample = generate_scene(SceneConfig(modalities=modalities, nodes_per_modality=30,
                                            correspondence_count=20, misalignment_rate=0.0))
        graph = sample.graph
        for corr in graph.correspondences:
            a, b = graph.node(corr.a), graph.node(corr.b)
            self.assertEqual(graph.modality('2d').labels.name(a.gt),
                             graph.modality('3d').labels.name(b.gt))

    def test_mapped_labels(self):
        """Test links across a label map join compatible labels."""
        modalities = (ModalitySpec('sem', LabelSpace(('car', 'road', 'tree')), 3),
                      ModalitySpec('geo', LabelSpace(('vertical', 'horizontal')), 2))
        mapping = LabelMap('sem', 'geo', {'car': 'vertical', 'road': 'horizontal',
                                          'tree': 'vertical'})
        sample = generate_scene(SceneConfig(modalities=modalities, label_maps=(mapping,),
                                            nodes_per_modality=20, correspondence_count=15,
                                            misalignment_rate=0.0))
        graph = sample.graph
        for latent in graph.latent_nodes:
            corr = graph.correspondences[latent.correspondence]
            sem, geo = graph.node(corr.a), graph.node(corr.b)
            self.assertEqual(latent.gt, sem.gt)
            self.assertEqual(mapping.table[graph.modality('sem').labels.name(sem.gt)],
                             graph.modality('geo').labels.name(geo.gt))

    def test_geometric_features(self):
        """Test geometric features are drawn deterministically per label."""
        features = geometric_features([1, 2, 2], label_count=2, dim=3, noise=0.0, seed=4)
        self.assertEqual(features.shape, (3, 3))
        np.testing.assert_array_equal(features[1], features[2])
        self.assertAlmostEqual(float(np.linalg.norm(features[0] - features[1])), 4.0)


class InjectMisalignmentTest(SimpleTestCase):
    """
    Test cases for inject_misalignment.
    """

    def setUp(self):
        self.config = small_config(nodes_per_modality=40, correspondence_count=40,
                                   misalignment_rate=0.0)
        self.sample = generate_scene(self.config)

    def test_rate_zero(self):
        """Test rate 0 leaves the sample unchanged."""
        result = inject_misalignment(self.sample, 0.0, seed=3)
        self.assertEqual(dumps_scene(result), dumps_scene(self.sample))

    def test_rate_one_and_original_untouched(self):
        """Test rate 1 cuts every link without touching the input."""
        before = dumps_scene(self.sample)
        result = inject_misalignment(self.sample, 1.0, seed=3)
        self.assertEqual(cut_fraction(result), 1.0)
        self.assertEqual(dumps_scene(self.sample), before)

    def test_applied_twice(self):
        """Test a second pass never repairs a cut link."""
        first = inject_misalignment(self.sample, 0.3, seed=1)
        second = inject_misalignment(first, 0.2, seed=2)
        self.assertGreater(cut_fraction(first), 0.0)
        self.assertGreaterEqual(cut_fraction(second), cut_fraction(first))

    def test_prototype_shift(self):
        """Test features move by the difference of the given prototypes."""
        prototypes = class_prototypes(self.config)
        result = inject_misalignment(self.sample, 1.0, seed=5, prototypes=prototypes)
        corr = self.sample.graph.correspondences[0]
        old, new = self.sample.graph.node(corr.b), result.graph.node(corr.b)
        expected = old.feature + prototypes['3d'][new.gt - 1] - prototypes['3d'][old.gt - 1]
        np.testing.assert_allclose(new.feature, expected)

    def test_invalid_rate(self):
        """Test rates outside [0, 1] are rejected."""
        with self.assertRaises(SceneConfigError):
            inject_misalignment(self.sample, 1.2, seed=0)

    def test_single_label(self):
        """Test there is no alternative label with one class."""
        config = small_config(modalities=default_modalities(label_count=1, dim=2),
                              misalignment_rate=0.0)
        sample = generate_scene(config)
        with self.assertRaises(SceneConfigError):
            inject_misalignment(sample, 1.0, seed=0)

    def test_unlabeled_endpoints_are_skipped(self):
        """Test links with an unlabeled endpoint neither fail the check nor change."""
        config = small_config(modalities=default_modalities(label_count=1, dim=2),
                              misalignment_rate=0.0)
        sample = generate_scene(config)
        nodes = tuple(
            node if node.modality == '2d'
            else GraphNode(node.node_id, node.modality, node.feature, gt=None,
                           instance=node.instance)
            for node in sample.graph.nodes
        )
        unlabeled = build_sample(sample.graph.replace(nodes=nodes), sample.sample_id)
        result = inject_misalignment(unlabeled, 1.0, seed=0)
        self.assertEqual(dumps_scene(result), dumps_scene(unlabeled))
        self.assertTrue(all(label is None for label in latent_labels(result)))


class SceneFileTest(SimpleTestCase):
    """
    Test cases for the scene file codec and ingest_features.
    """

    def setUp(self):
        self.sample = generate_scene(small_config())
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def test_round_trip(self):
        """Test export then ingest gives the same sample."""
        path = export_scene(self.sample, Path(self.tmp.name) / 'scene.jsonl')
        loaded = ingest_features(path)
        self.assertEqual(scene_to_dict(loaded), scene_to_dict(self.sample))
        self.assertEqual(path.read_text(encoding='utf-8'), dumps_scene(loaded))
        self.assertEqual(latent_labels(loaded), latent_labels(self.sample))

    def test_header_line(self):
        """Test the first line names the format."""
        header = json.loads(dumps_scene(self.sample).splitlines()[0])
        self.assertEqual(header['format'], 'softcorr-scene')
        self.assertEqual(header['sample_id'], 'scene-0001')

    def test_data61_dimensions(self):
        """Test 23- and 17-dimensional features pass a DATA61-shaped check."""
        modalities = (ModalitySpec('2d', LabelSpace(DATA61_2D), 23),
                      ModalitySpec('3d', LabelSpace(DATA61_2D[:12] + ('wire',)), 17))
        sample = generate_scene(SceneConfig(modalities=modalities, nodes_per_modality=15,
                                            correspondence_count=10))
        path = export_scene(sample, Path(self.tmp.name) / 'data61.jsonl')
        loaded = ingest_features(path, expected=modalities)
        self.assertEqual(loaded.graph.modality('2d').feature_dim, 23)
        wrong = (modalities[0], ModalitySpec('3d', modalities[1].labels, 16))
        with self.assertRaises(SchemaError) as ctx:
            ingest_features(path, expected=wrong)
        self.assertEqual(ctx.exception.field, 'dim')
        self.assertEqual(ctx.exception.line, 3)

    def test_missing_gt_accepted_until_training(self):
        """Test a node without ground truth loads but cannot be trained on."""
        lines = dumps_scene(self.sample).splitlines()
        index = next(i for i, line in enumerate(lines) if '"section": "nodes"' in line)
        record = json.loads(lines[index])
        del record['gt']
        lines[index] = json.dumps(record, sort_keys=True)
        loaded = loads_scene('\n'.join(lines))
        self.assertEqual(loaded.missing_ground_truth(), [record['id']])
        params = init_parameters(schema(loaded.graph), mode=NO_LATENT)
        with self.assertRaises(GroundTruthError):
            train(params, [loaded])

    def test_invalid_json_line(self):
        """Test a broken line is reported by number."""
        lines = dumps_scene(self.sample).splitlines()
        lines[2] = '{"section": "modalities",'
        with self.assertRaises(SchemaError) as ctx:
            loads_scene('\n'.join(lines))
        self.assertEqual(ctx.exception.line, 3)

    def test_missing_field(self):
        """Test a missing overlap is reported with its field."""
        lines = dumps_scene(self.sample).splitlines()
        index = next(i for i, line in enumerate(lines) if 'correspondences' in line)
        record = json.loads(lines[index])
        del record['overlap']
        lines[index] = json.dumps(record)
        with self.assertRaises(SchemaError) as ctx:
            loads_scene('\n'.join(lines))
        self.assertEqual((ctx.exception.line, ctx.exception.field), (index + 1, 'overlap'))

    def test_wrong_header_and_section(self):
        """Test foreign files and unknown sections are rejected."""
        with self.assertRaises(SchemaError):
            loads_scene('{"format": "csv", "version": 1}\n')
        text = dumps_scene(self.sample) + '{"section": "frames"}\n'
        with self.assertRaises(SchemaError) as ctx:
            loads_scene(text)
        self.assertEqual(ctx.exception.field, 'section')

    def test_dangling_node(self):
        """Test a link to an unknown node is a schema error."""
        text = dumps_scene(self.sample) + json.dumps(
            {'section': 'correspondences', 'a': 0, 'b': 999, 'overlap': 0.5, 'cuttable': True}
        ) + '\n'
        with self.assertRaises(SchemaError) as ctx:
            loads_scene(text)
        self.assertEqual(ctx.exception.field, 'dangling id')

    def test_explicit_latent_labels(self):
        """Test latent labels stored in the file win over derived ones."""
        lines = dumps_scene(generate_scene(small_config(misalignment_rate=0.0))).splitlines()
        index = next(i for i, line in enumerate(lines) if 'correspondences' in line)
        record = json.loads(lines[index])
        record['latent_gt'] = 0
        lines[index] = json.dumps(record)
        loaded = loads_scene('\n'.join(lines))
        self.assertEqual(latent_labels(loaded)[0], 0)
        record['cuttable'] = False
        lines[index] = json.dumps(record)
        with self.assertRaises(SchemaError):
            loads_scene('\n'.join(lines))
