import init, { roots_json, det_field, trajectory, default_window_json } from "./pkg/delaystab_demo.js";

const presets = {
  ide05: { kind: "ide", dimension: 1, tau_star: 1.0, delay_terms: [{ tau: 1.0, A: [[0.5]] }] },
  ide2: { kind: "ide", dimension: 1, tau_star: 1.0, delay_terms: [{ tau: 1.0, A: [[2.0]] }] },
  dde1: { kind: "dde", dimension: 1, tau_star: 1.0, delay_terms: [{ tau: 1.0, A: [[1.0]] }] },
  hayes: { kind: "dde", dimension: 1, tau_star: 1.0, delay_terms: [{ tau: 1.0, A: [[Math.PI / 2]] }] },
  mixed: {
    kind: "ide", dimension: 1, tau_star: 1.0,
    delay_terms: [{ tau: 1.0, A: [[0.3]] }],
    kernel: [{ interval: [0.0, 1.0], coeffs: [[[0.2]]] }],
  },
};

const $ = (id) => document.getElementById(id);
const status = (msg) => { $("status").textContent = msg; };

function loadPreset() {
  $("spec").value = JSON.stringify(presets[$("preset").value], null, 2);
  const w = JSON.parse(default_window_json($("spec").value));
  if (!w.error) {
    $("xmin").value = w.x_min.toFixed(2);
    $("xmax").value = w.x_max.toFixed(2);
    $("ymax").value = Math.min(w.y_max, 40).toFixed(1);
  }
}

function drawRoots() {
  const spec = $("spec").value;
  const x0 = +$("xmin").value, x1 = +$("xmax").value, y1 = +$("ymax").value;
  const canvas = $("plane");
  const ctx = canvas.getContext("2d");
  const nx = 120, ny = 120;
  const field = det_field(spec, x0, x1, 0, y1, nx, ny);
  if (field.length === 0) {
    status("spec does not parse");
    return;
  }
  const lo = Math.min(...field), hi = Math.max(...field);
  const cw = canvas.width / nx, ch = canvas.height / ny;
  for (let j = 0; j < ny; j++) {
    for (let i = 0; i < nx; i++) {
      const v = (field[j * nx + i] - lo) / (hi - lo || 1);
      const c = Math.round(255 * v);
      ctx.fillStyle = `rgb(${c}, ${c}, ${Math.min(255, c + 40)})`;
      ctx.fillRect(i * cw, canvas.height - (j + 1) * ch, cw + 1, ch + 1);
    }
  }
  const px = (x) => ((x - x0) / (x1 - x0)) * canvas.width;
  const py = (y) => canvas.height - (y / y1) * canvas.height;
  if (x0 < 0 && x1 > 0) {
    ctx.strokeStyle = "#888";
    ctx.beginPath();
    ctx.moveTo(px(0), 0);
    ctx.lineTo(px(0), canvas.height);
    ctx.stroke();
  }
  const res = JSON.parse(roots_json(spec, x0, x1, y1));
  if (res.error) {
    status(res.error);
    return;
  }
  ctx.fillStyle = "#d22";
  for (const r of res.roots) {
    ctx.beginPath();
    ctx.arc(px(r.re), py(r.im), 4, 0, 2 * Math.PI);
    ctx.fill();
  }
  const a = res.abscissa === null ? "none in window" : res.abscissa.toFixed(6);
  status(`abscissa: ${a}\nroots: ${res.roots.map((r) => `${r.re.toFixed(5)} + ${r.im.toFixed(5)}i`).join(", ")}`);
}

function drawTrajectory() {
  const data = trajectory($("spec").value, +$("horizon").value, $("history").value);
  const canvas = $("traj");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (data.length === 0) {
    status("simulation failed");
    return;
  }
  const t = [], x = [];
  for (let i = 0; i < data.length; i += 2) {
    t.push(data[i]);
    x.push(data[i + 1]);
  }
  const t0 = t[0], t1 = t[t.length - 1];
  const m = Math.max(...x.map(Math.abs)) || 1;
  const px = (v) => ((v - t0) / (t1 - t0)) * canvas.width;
  const py = (v) => canvas.height / 2 - (v / m) * (canvas.height / 2 - 10);
  ctx.strokeStyle = "#aaa";
  ctx.beginPath();
  ctx.moveTo(0, py(0));
  ctx.lineTo(canvas.width, py(0));
  ctx.moveTo(px(0), 0);
  ctx.lineTo(px(0), canvas.height);
  ctx.stroke();
  ctx.strokeStyle = "#15c";
  ctx.beginPath();
  const stride = Math.max(1, Math.floor(t.length / 2000));
  for (let i = 0; i < t.length; i += stride) {
    if (i === 0) ctx.moveTo(px(t[i]), py(x[i]));
    else ctx.lineTo(px(t[i]), py(x[i]));
  }
  ctx.stroke();
  status(`simulated ${t.length} samples on [${t0}, ${t1.toFixed(3)}], max |x| = ${m.toPrecision(4)}`);
}

await init();
$("preset").addEventListener("change", () => { loadPreset(); drawRoots(); });
$("roots").addEventListener("click", drawRoots);
$("simulate").addEventListener("click", drawTrajectory);
loadPreset();
drawRoots();
drawTrajectory();
