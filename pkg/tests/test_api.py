"""
Test suite for the coordinator operator API
"""

from fastapi import status


class TestWithoutCoordinator:
    def test_root_lists_endpoints(self, client):
        data = client.get("/").json()
        assert data["endpoints"]["instructions"] == "/api/v1/instructions"

    def test_routes_answer_503(self, client):
        assert client.get("/api/v1/devices").status_code == status.HTTP_503_SERVICE_UNAVAILABLE
        response = client.post("/api/v1/instructions", json={"text": "Check the shelves."})
        assert response.status_code == status.HTTP_503_SERVICE_UNAVAILABLE


class TestInstructions:
    def test_submit_queues_instruction(self, coordinator_client, warehouse_system):
        response = coordinator_client.post(
            "/api/v1/instructions",
            json={"text": "Please check if there are vacant positions on the shelves."},
        )

        assert response.status_code == status.HTTP_200_OK
        data = response.json()
        assert data["instruction_id"] == 1
        assert data["pending"] == 1
        assert warehouse_system.coordinator.pending_instructions[0].text.startswith("Please check")

    def test_ids_increase_in_submission_order(self, coordinator_client):
        first = coordinator_client.post("/api/v1/instructions", json={"text": "one"}).json()
        second = coordinator_client.post("/api/v1/instructions", json={"text": "two"}).json()
        assert (first["instruction_id"], second["instruction_id"]) == (1, 2)
        assert second["pending"] == 2

    def test_blank_instruction_rejected(self, coordinator_client):
        response = coordinator_client.post("/api/v1/instructions", json={"text": "   "})
        assert response.status_code == status.HTTP_400_BAD_REQUEST

    def test_missing_text_is_validation_error(self, coordinator_client):
        response = coordinator_client.post("/api/v1/instructions", json={})
        assert response.status_code == status.HTTP_422_UNPROCESSABLE_ENTITY


class TestDevices:
    def test_lists_registered_robots(self, coordinator_client):
        devices = coordinator_client.get("/api/v1/devices").json()["devices"]

        assert [d["device_id"] for d in devices] == ["robot_1", "robot_2"]
        for device in devices:
            assert "move_to_shelf" in device["functions"]
            assert device["report"]["status"] == "ok"
            assert device["report"]["attributes"]["location"] == "base"
            assert device["outstanding_subtask"] is None

    def test_single_device(self, coordinator_client):
        response = coordinator_client.get("/api/v1/devices/robot_2")
        assert response.status_code == status.HTTP_200_OK
        assert response.json()["profile_version"] == 1

    def test_unknown_device_404(self, coordinator_client):
        response = coordinator_client.get("/api/v1/devices/robot_9")
        assert response.status_code == status.HTTP_404_NOT_FOUND


class TestRoundsAndLog:
    def test_rounds(self, coordinator_client):
        rounds = coordinator_client.get("/api/v1/rounds").json()["rounds"]

        assert len(rounds) == 1
        assert rounds[0]["round"] == 1
        assert rounds[0]["received"] == ["robot_1", "robot_2"]
        assert rounds[0]["dispatched"] == []

    def test_m2m_limit(self, coordinator_client):
        full = coordinator_client.get("/api/v1/m2m").json()
        limited = coordinator_client.get("/api/v1/m2m", params={"limit": 2}).json()

        assert full["message_count"] == 4
        assert any("round 1 poll" in line for line in full["lines"])
        assert limited["lines"] == full["lines"][-2:]

    def test_limit_out_of_range(self, coordinator_client):
        response = coordinator_client.get("/api/v1/rounds", params={"limit": 0})
        assert response.status_code == status.HTTP_422_UNPROCESSABLE_ENTITY
