import init, { Demo } from "./pkg/sbmatch_web.js";

const EXTENT = 3.5;
const canvas = document.getElementById("plot");
const ctx = canvas.getContext("2d");
const $ = (id) => document.getElementById(id);

let demo = null;
let paths = null;
let timer = null;

const px = (x) => ((x + EXTENT) / (2 * EXTENT)) * canvas.width;
const py = (y) => canvas.height - ((y + EXTENT) / (2 * EXTENT)) * canvas.height;

function dot(x, y, r, color) {
  ctx.fillStyle = color;
  ctx.fillRect(px(x) - r / 2, py(y) - r / 2, r, r);
}

function draw() {
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const target = demo.targetPoints();
  for (let i = 0; i < target.length; i += 2) dot(target[i], target[i + 1], 2, "#f4a261");

  const t = Number($("t").value);
  const field = demo.driftField(t, 21, EXTENT);
  ctx.strokeStyle = "#8aa";
  ctx.beginPath();
  for (let i = 0; i < field.length; i += 4) {
    const [x, y, gx, gy] = field.subarray(i, i + 4);
    const len = Math.hypot(gx, gy) || 1;
    const s = 0.25 * Math.min(len, 1) / len;
    ctx.moveTo(px(x), py(y));
    ctx.lineTo(px(x + s * gx), py(y + s * gy));
  }
  ctx.stroke();

  if (paths) {
    const { data, times } = paths;
    ctx.strokeStyle = "rgba(40, 80, 160, 0.25)";
    for (let i = 0; i < data.length; i += 2 * times) {
      ctx.beginPath();
      ctx.moveTo(px(data[i]), py(data[i + 1]));
      for (let k = 1; k < times; k++) ctx.lineTo(px(data[i + 2 * k]), py(data[i + 2 * k + 1]));
      ctx.stroke();
      dot(data[i + 2 * times - 2], data[i + 2 * times - 1], 3, "#264653");
    }
  }
}

function status() {
  $("status").textContent = `iteration ${demo.iteration}, loss ${demo.loss.toFixed(4)}`;
}

function guard(fn) {
  try {
    fn();
  } catch (e) {
    stop();
    $("status").textContent = `error: ${e.message ?? e}`;
  }
}

function stop() {
  if (timer !== null) clearInterval(timer);
  timer = null;
  $("auto").checked = false;
}

function reset() {
  stop();
  paths = null;
  guard(() => {
    demo?.free();
    demo = new Demo($("dataset").value, Number($("eps").value), Number($("components").value), BigInt($("seed").value));
    $("status").textContent = "ready";
    draw();
  });
}

function train(steps) {
  guard(() => {
    demo.trainSteps(steps);
    status();
    draw();
  });
}

await init();
reset();

$("reset").onclick = reset;
$("train").onclick = () => train(200);
$("auto").onchange = (e) => {
  if (e.target.checked) timer = setInterval(() => train(25), 0);
  else stop();
};
$("sample").onclick = () =>
  guard(() => {
    const times = 16;
    paths = { data: demo.sampleTrajectories(300, times), times };
    draw();
  });
$("t").oninput = () => {
  $("tval").textContent = Number($("t").value).toFixed(2);
  if (demo) guard(draw);
};
