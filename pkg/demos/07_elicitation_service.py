"""A scripted tour of the elicitation service the classification UI uses.

The same flow a browser session follows: ask for the next image, fetch the
issued points, submit labels, read back the accuracy weight.  Validation
images come first and share one canonical point set per image, so every
citizen answers the locations the expert labelled.

Run the real server with `coralcast serve --config <cfg> --port 8000`.
"""

from fastapi.testclient import TestClient

from coralcast.elicitation import ClassificationStore
from coralcast.service import CatalogImage, ElicitationService, build_app

catalog = [
    CatalogImage("val-01", "Catlin", 150.10, -22.90, 2012,
                 "https://images.example/val-01.jpg", validation=True),
    CatalogImage("rc-117", "ReefCheck", 150.31, -22.72, 2007,
                 "https://images.example/rc-117.jpg", validation=False),
]
expert_labels = {"val-01": {0: "coral", 1: "coral", 2: "algae", 3: "sand",
                            4: "water", 5: "coral"}}
service = ElicitationService(catalog, expert_labels,
                             store=ClassificationStore(), n_points=6,
                             seed=42)
client = TestClient(build_app(service))

user = "demo-citizen"
image = client.get("/api/images/next", params={"user": user}).json()
print(f"next image for {user}: {image['media_id']} "
      f"(validation={image['validation']})")

points = client.get(f"/api/images/{image['media_id']}/points",
                    params={"user": user}).json()
print(f"issued {len(points)} stratified points; first two: "
      f"{[(round(p['x'], 3), round(p['y'], 3)) for p in points[:2]]}")

# the citizen gets points 2 and 5 wrong against the expert
answers = ["coral", "coral", "coral", "sand", "water", "algae"]
batch = [{"media_id": image["media_id"], "point_id": p["point_id"],
          "label": lab, "user_id": user}
         for p, lab in zip(points, answers)]
reply = client.post("/api/classifications", json=batch).json()
print(f"submitted batch: {reply}")

accuracy = client.get(f"/api/users/{user}/accuracy").json()
print(f"accuracy after {accuracy['n_validation_images']} validation "
      f"image(s): {accuracy['w_a']:.3f}")

nxt = client.get("/api/images/next", params={"user": user}).json()
print(f"next up: {nxt['media_id']} (a survey image, "
      f"points now unique to this user)")
