from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

RATINGS_COLUMNS: Tuple[str, ...] = ('rater_id', 'family', 'teacher_id', 'year', 'observation_id',
                                    'segment_index', 'item_id', 'score')
ROSTER_COLUMNS: Tuple[str, ...] = ('rater_id', 'family')
ATTRIBUTES_COLUMNS: Tuple[str, ...] = ('teacher_id', 'attribute', 'value')


class ScaleSpec(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    item_id: str
    category_count: int = Field(alias='categories', ge=2)
    reverse_coded: bool = False
    dimension: int = Field(default=1, ge=1)
    segment_minutes: float = Field(default=7.5, gt=0)


class ScaleFile(BaseModel):
    items: List[ScaleSpec]

    @field_validator('items')
    @classmethod
    def check_items(cls, items: List[ScaleSpec]) -> List[ScaleSpec]:
        if not items:
            raise ValueError("scale declares no items")

        ids = [x.item_id for x in items]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate item_id in scale")

        dims = sorted(set(x.dimension for x in items))
        if dims != list(range(1, len(dims) + 1)):
            raise ValueError(f"dimensions must form a contiguous 1..M set, got {dims}")

        return items


class RatingRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    rater_id: str
    family: str
    teacher_id: str
    year: str
    observation_id: str
    segment_index: int = Field(ge=1)
    item_id: str
    score: int = Field(ge=1)

    @property
    def facet_key(self) -> Tuple[str, str, str, int, str]:
        return self.rater_id, self.teacher_id, self.observation_id, self.segment_index, self.item_id


class TeacherAttributes(BaseModel):
    model_config = ConfigDict(frozen=True)

    values: Dict[str, Dict[str, str]] = Field(default_factory=dict)

    @model_validator(mode='after')
    def check_levels(self) -> 'TeacherAttributes':
        for teacher, attrs in self.values.items():
            for name, level in attrs.items():
                if level == "":
                    raise ValueError(f"teacher {teacher} has an empty value for attribute {name}")
        return self

    def attribute_names(self) -> List[str]:
        return sorted(set(name for attrs in self.values.values() for name in attrs))

    def level(self, teacher_id: str, attribute: str) -> Optional[str]:
        return self.values.get(teacher_id, dict()).get(attribute)

    def levels(self, attribute: str) -> List[str]:
        return sorted(set(attrs[attribute] for attrs in self.values.values() if attribute in attrs))
