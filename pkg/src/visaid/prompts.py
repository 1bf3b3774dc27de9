"""Prompt templates shipped with the toolkit.

These are data, not code: the generation-facing templates used to render
dataset samples and to drive the judge protocol. Placeholders use
``str.format`` names.
"""

AFFORDANCE_PROMPT_TEMPLATE = (
    "You are currently a robot performing robotic manipulation tasks. "
    "Your task instruction: {instruction}. Observe the image, use 2D points "
    "and bounding box to mark the target location where the manipulated "
    "object will be moved. In your answer, use <box>[[x1, y1, x2, y2]]</box> "
    "to present the bounding box of the target region, and use "
    "<point>[[x1, y1], [x2, y2], ...]</point> to mark the points of the free space."
)

TRACE_PROMPT_TEMPLATE = (
    "You are currently a robot performing robotic manipulation tasks. "
    "Your task instruction: {instruction}. Observe the image, use 2D points "
    "to mark the manipulated object-centric waypoints to guide the robot to "
    "manipulate the object. Typically, the waypoints consist of an ordered "
    "sequence of eight 2D points. The format is <point>[[x1, y1], [x2, y2], ...]</point>."
)

INVERSE_PROMPT_TEMPLATE = (
    "You are currently a robot performing robotic manipulation tasks. "
    "Observe the image. The following visual aid marks how the manipulated "
    "object should move or where it should end up: {aid} "
    "State the task instruction that this visual aid carries out."
)

JUDGE_PROMPT_TEMPLATE = """You are an expert evaluator in robotic manipulation and visual reasoning. Your job is to assess the quality of predicted trajectories based on task instructions and visual inputs.

You are given:

- A task instruction describing an object manipulation task.

- An image showing a predicted trajectory.

**Note:**

- In the image, the red circle indicates the start point, and the blue diamond indicates the end point.

- The trajectory represents the predicted movement path of the manipulated object, not the robot or end-effector.

- You should **evaluate the predicted trajectory as a proposed motion for the object that is supposed to be moved**, based on the task instruction — not based on the static positions of objects in the image. The objects have not actually moved.

**Evaluation Criteria (listed in order of importance):**

1. **Task Alignment and Success (most important)**
   - Does the trajectory clearly and accurately fulfill the task instruction?
   - **The trajectory must start at the correct location and end at a target position that aligns with the task goal.**
   - Large deviations in the starting or ending point (e.g., wrong object, wrong destination, or stopping short of the goal) should result in a low score, even if the rest of the trajectory is smooth.
   - If the task is not accomplished (due to incorrect goal interpretation or spatial execution), the score should be low regardless of other qualities.

2. **Feasibility**
   - Is the movement physically plausible, smooth, and continuous?
   - Are there any unrealistic discontinuities, sharp turns, or impossible transitions?
   - Even if the movement is feasible, it should not receive a high score if the task is not completed.

3. **Obstacle Avoidance / Safety**
   - Does the trajectory reasonably avoid collisions with surrounding objects?
   - Minor risks may be tolerated if the task is completed successfully, but major or clear collisions should reduce the score.

**Scoring Guideline:**

- If the task is **not accomplished**, or if the start or end point is significantly incorrect, the score should typically be **4 or below**.

- If the task is completed but the trajectory has issues (e.g., roughness, minor risk of collision), a score in the **6–8** range is appropriate.

- A **score of 9–10** should be given only when the trajectory clearly completes the task, with good start/end accuracy, smooth motion, and reasonable safety.

Based on these criteria, provide a single overall score from 1 (very poor) to 10 (excellent), reflecting how well the task is accomplished.

Respond strictly in the following format:

Score: <1-10>

Explanation: <brief justification>

The task instruction is:
{task_instruction}

Please give your response.
"""

# Template for completing Description/Reasoning chains with an external
# captioning model. Shipped for pipeline use only; nothing in this package
# executes it.
COT_COMPLETION_PROMPT = """You are an AI visual assistant that can analyze a single image. You receive one image and corresponding caption, task instruction, manipulated object in the task and target place to finish the task, and bounding box position and relative position of these objects. Also, you receive the answer of points and bbox. Now, you need to generate a <Description>...</Description>, <Reasoning>...</Reasoning>, <Answer>...</Answer> format.

<Description>
First, using the provided caption, task instruction, describe the scene. If there are errors in the caption, please ignore them and do not point them out in your description. Instead of directly mentioning the bounding box coordinates, utilize this data to explain the scene using natural language with its bounding box in the format like "<ref>object</ref><box>[[x1, y1, x2, y2]]</box>". When mentioning the predicate between two objects, you should mention it in the format like "<pred>predicate</pred><box>[[x1, y1, x2, y2]]</box><box>[[x3, y3, x4, y4]]</box>", where "<box>[[x1, y1, x2, y2]]</box>" denotes the bounding box coordinates of the subject and "<box>[[x3, y3, x4, y4]]</box>" denotes the bounding box coordinates of the object.
</Description>

<Reasoning>
According to the task instruction and the answer of points and bbox, provide a chain-of-thought, logical explanation of the problem.
</Reasoning>

<Answer>
State the final bounding box answer and point answer in a clear and direct format here. Bounding box answer is in the format like "<box>[[x1, y1, x2, y2]]</box>". Point answer is in the format like "<point>[[x1, y1], [x2, y2], [x3, y3], ...]</point>".
</Answer>
"""
