import os
from enum import Enum

from dotenv import load_dotenv


load_dotenv()


class FlowLabel(str, Enum):
    BENIGN = 'benign'
    MALICIOUS = 'malicious'


class AnomalyCategory(str, Enum):
    NON_WL_DST_PORT = 'non_wl_dst_port'
    NON_WL_PROTOCOL = 'non_wl_protocol'
    BL_SRC_PORT = 'bl_src_port'
    PORT_ZERO = 'port_zero'
    SMALL_PAYLOAD_PAIR = 'small_payload_pair'
    MULTI_FEATURE_SUBTLE = 'multi_feature_subtle'


class RunMode(str, Enum):
    TRAIN = 'train'
    EVAL = 'eval'


# Версии форматов файлов
BUNDLE_FORMAT_VERSION = 'mdl-v1'
ENCODING_LAYOUT_VERSION = 'enc-v1'

# Протоколы с портами
PROTO_TCP = 6
PROTO_UDP = 17
PORT_PROTOCOLS = (PROTO_TCP, PROTO_UDP)

# Окно агрегации потока (секунды) и эпсилон длительности
FLOW_WINDOW_SECONDS = 10.0
DURATION_EPSILON = 1e-6

# Кодирование
PORT_GROUP_SIZE = 51
PORT_BINS = 1286
PROTOCOL_BINS = 256
MAX_PORT = 65535

# Порядок флагов TCP опций
TCP_OPTION_FLAGS = ('M', 'w', 's', 'S', 'e', 'E', 'T', 'c', 'N', 'O', 'SS', 'D')

# 23 признака потока; первые три - категориальные
FEATURE_NAMES = (
    'Sport', 'Dport', 'Proto',
    'SrcPkts', 'SrcRate', 'SrcLoad', 'SIntPkt', 'sTtl',
    'sMaxPktSz', 'sMinPktSz', 'SrcTCPBase',
    *(f'TcpOpt_{flag}' for flag in TCP_OPTION_FLAGS),
)
CATEGORICAL_FEATURES = FEATURE_NAMES[:3]
SCALAR_FEATURES = FEATURE_NAMES[3:]

DEFAULT_LAYER_DIMS = (2848, 512, 64, 4, 64, 512, 2848)

# Значимая атрибуция ("at least 10%")
SIGNIFICANT_ATTRIBUTION = 0.10
VALIDATION_GATE = 0.99


class Settings:
    LOG_LEVEL: str = os.getenv('DDOS_AE_LOG_LEVEL', 'INFO')
    LOG_FORMAT: str = os.getenv(
        'DDOS_AE_LOG_FORMAT',
        '%(asctime)s %(levelname)s [%(name)s] %(message)s',
    )
    SEED: int = int(os.getenv('DDOS_AE_SEED', '2019'))
    EVAL_CHUNK: int = int(os.getenv('DDOS_AE_EVAL_CHUNK', '512'))
    PROGRESS: bool = os.getenv('DDOS_AE_PROGRESS', 'false').lower() in ('true', '1')

    @staticmethod
    def source_date_epoch():
        """Фиксированное время сборки для воспроизводимых файлов модели"""
        value = os.getenv('SOURCE_DATE_EPOCH')
        return int(value) if value else None


settings = Settings()
