import json

import pytest

from app.core.api_corpus import (
    apply_profile_update,
    chunk_profile,
    load_profile,
    load_profile_file,
    render_chunk_text,
    serialize_profile,
)
from app.core.errors import CorpusValidationError, MalformedDocumentError, ProfileIdentityError
from app.schemas.corpus import RoleHint, ValueType


def _doc(**overrides):
    doc = {
        "device_id": "dev",
        "functions": [
            {
                "name": "set_speed",
                "description": "Set the speed.",
                "parameters": [{"name": "rpm", "value_type": "integer", "range": [0, 100]}],
            }
        ],
    }
    doc.update(overrides)
    return json.dumps(doc)


class TestLoadProfile:
    def test_shipped_corpora_load(self, robot_profile, wifi_sdr_profile, wifi_commercial_profile):
        assert robot_profile.device_id == "robot"
        assert [f.name for f in robot_profile.functions][:2] == ["move_to_shelf", "identify_vacancy_by_shelf"]
        assert wifi_sdr_profile.device_id == "client_1"
        assert wifi_commercial_profile.device_id == "client_2"
        assert len(wifi_commercial_profile.functions) == 3

    def test_role_hints(self, wifi_sdr_profile):
        assert wifi_sdr_profile.function_with_role(RoleHint.INIT).name == "open_session"
        assert wifi_sdr_profile.function_with_role(RoleHint.RELEASE).name == "close_session"

    def test_parameter_types(self, robot_profile):
        shelf = robot_profile.function("move_to_shelf").parameters[0]
        assert shelf.value_type == ValueType.INTEGER
        assert shelf.range == (1, 16)

    def test_malformed_json_carries_offset(self):
        raw = b'{"device_id": "x", "functions": [}'
        with pytest.raises(MalformedDocumentError) as exc:
            load_profile(raw)
        assert exc.value.offset == raw.index(b"}")

    def test_non_object_rejected(self):
        with pytest.raises(CorpusValidationError):
            load_profile("[]")

    def test_duplicate_function_names(self):
        doc = json.loads(_doc())
        doc["functions"].append(doc["functions"][0])
        with pytest.raises(CorpusValidationError, match="duplicate function"):
            load_profile(json.dumps(doc))

    def test_duplicate_parameter_names(self):
        doc = json.loads(_doc())
        doc["functions"][0]["parameters"].append({"name": "rpm", "value_type": "integer"})
        with pytest.raises(CorpusValidationError, match="duplicate parameter"):
            load_profile(json.dumps(doc))

    def test_blank_description(self):
        doc = json.loads(_doc())
        doc["functions"][0]["description"] = "   "
        with pytest.raises(CorpusValidationError):
            load_profile(json.dumps(doc))

    def test_range_on_string_parameter(self):
        doc = json.loads(_doc())
        doc["functions"][0]["parameters"][0]["value_type"] = "string"
        with pytest.raises(CorpusValidationError, match="non-numeric"):
            load_profile(json.dumps(doc))

    def test_unknown_value_type(self):
        doc = json.loads(_doc())
        doc["functions"][0]["parameters"][0]["value_type"] = "complex"
        with pytest.raises(CorpusValidationError):
            load_profile(json.dumps(doc))

    def test_empty_function_list_is_valid(self):
        assert load_profile(_doc(functions=[])).functions == []

    def test_serialize_is_stable(self, robot_profile):
        assert load_profile(serialize_profile(robot_profile)) == robot_profile
        assert serialize_profile(robot_profile) == serialize_profile(load_profile_file("robot.json"))


class TestChunks:
    def test_one_chunk_per_function_in_order(self, wifi_sdr_profile):
        chunks = chunk_profile(wifi_sdr_profile)
        assert [c.function.name for c in chunks] == [f.name for f in wifi_sdr_profile.functions]
        assert all(c.source_device == "client_1" for c in chunks)

    def test_chunk_text(self, robot_profile):
        text = render_chunk_text(robot_profile.function("move_to_shelf"))
        assert text == (
            "move_to_shelf. Move the robot to the shelf with the given shelf number. "
            "parameters: shelf_id (Number of the target shelf)"
        )

    def test_chunk_text_without_parameters(self, robot_profile):
        assert render_chunk_text(robot_profile.function("return_to_base")).endswith("parameters: none")

    def test_empty_profile_has_no_chunks(self):
        assert chunk_profile(load_profile(_doc(functions=[]))) == []


class TestProfileUpdate:
    def test_newer_version_adopted(self):
        current = load_profile(_doc(version=1))
        update = load_profile(_doc(version=2))
        assert apply_profile_update(current, update) is update

    def test_same_or_older_version_ignored(self):
        current = load_profile(_doc(version=2))
        assert apply_profile_update(current, load_profile(_doc(version=2))) is current
        assert apply_profile_update(current, load_profile(_doc(version=1))) is current

    def test_other_device_rejected(self):
        with pytest.raises(ProfileIdentityError):
            apply_profile_update(load_profile(_doc()), load_profile(_doc(device_id="other", version=5)))
