"""Networks mapping a scan volume to mesh vertices, edges and faces."""

from .config import ModelConfig
from .direct import DirectFaceNet, all_triples, surface_triple_labels, triple_labels
from .encoder import Encoder, EncoderFeatures, f2_cells, lookup_f2
from .face import DualBatch, FaceNet, batch_duals, face_probabilities
from .graphnet import VertexEdgeNet, edge_probabilities, message_pass, symmetrize_pairs
from .scan2mesh import FACE_THRESHOLD, Prediction, Scan2Mesh, ScanBatch, kept_faces

__all__ = [
    "DirectFaceNet", "DualBatch", "Encoder", "EncoderFeatures", "FACE_THRESHOLD", "FaceNet",
    "ModelConfig", "Prediction", "Scan2Mesh", "ScanBatch", "VertexEdgeNet", "all_triples",
    "batch_duals", "edge_probabilities", "f2_cells", "face_probabilities", "kept_faces", "lookup_f2",
    "message_pass", "surface_triple_labels", "symmetrize_pairs", "triple_labels",
]
